//! TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wkam_core::evolve::{CauchyOptions, ErgodicOptions};
use wkam_core::hamiltonian::Anisotropy;
use wkam_core::mather::{SimplexOptions, VelocityGrid};
use wkam_core::potential::{ExprField, ScalarField};
use wkam_core::{CouplingMatrix, Family, HamiltonianSpec, PeriodicGrid, Potential};

/// A configuration problem, reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

type Result<T> = std::result::Result<T, ConfigError>;

fn bad<T>(field: &str, msg: impl std::fmt::Display) -> Result<T> {
    Err(ConfigError(format!("{field}: {msg}")))
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub adjoint: AdjointConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Quadratic,
    Anisotropic,
    Quartic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PotentialSource {
    /// One expression shared by every component.
    Shared(String),
    PerComponent(Vec<String>),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_family")]
    pub family: FamilyName,
    /// One symmetric positive definite `d x d` matrix per component.
    #[serde(default)]
    pub anisotropy: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub potential: Option<PotentialSource>,
    /// CSV with one column per component, sampled on the `n^d` lattice in
    /// node-major order.
    #[serde(default)]
    pub potential_table: Option<PathBuf>,
    /// Constant added to `H`.
    #[serde(default)]
    pub shift: f64,
    pub coupling: Vec<Vec<f64>>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub components: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    pub n: usize,
    pub n_q: usize,
    /// Velocity truncation; derived from the Lipschitz bound when absent.
    pub q_max: Option<f64>,
    pub eps: Vec<f64>,
    /// Fraction of the stable time step.
    pub safety: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            n: 64,
            n_q: 17,
            q_max: None,
            eps: vec![0.2, 0.1, 0.05],
            safety: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum LpMethod {
    Simplex,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Residual target of the ergodic fixed-point solves.
    pub tol: f64,
    pub max_iter: usize,
    pub lp_method: LpMethod,
    pub lp_max_iter: usize,
    pub seed: u64,
    /// Random objectives used to sample the optimal face.
    pub samples: usize,
    pub mass_threshold: f64,
    pub assumption_samples: usize,
    pub p_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 5_000_000,
            lp_method: LpMethod::Simplex,
            lp_max_iter: 1_000_000,
            seed: 20240611,
            samples: 32,
            mass_threshold: 0.05,
            assumption_samples: 20_000,
            p_max: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Gnuplot,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    /// Largest number of frames written per time slab.
    pub frames: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
            frames: 101,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjointConfig {
    /// Source point, snapped to the nearest node.
    pub x0: Vec<f64>,
    /// 1-based component of the source.
    pub component: usize,
}

impl Default for AdjointConfig {
    fn default() -> Self {
        Self {
            x0: vec![0.0],
            component: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// Zeros of `f` anchoring `v1` and `v2`.
    pub anchors_1: Vec<f64>,
    pub anchors_2: Vec<f64>,
    pub shift_1: f64,
    pub shift_2: f64,
    pub tol_hyp: f64,
    /// Defaults to `tol_hyp + 4h`.
    pub tol_con: Option<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            anchors_1: vec![0.0],
            anchors_2: vec![0.0],
            shift_1: 0.0,
            shift_2: 0.0,
            tol_hyp: 1e-3,
            tol_con: None,
        }
    }
}

fn default_family() -> FamilyName {
    FamilyName::Quadratic
}

fn default_dim() -> usize {
    1
}

/// Command-line values that replace config entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub eps: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// Parses and validates; toml errors carry line, column and key.
    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(n) = o.grid {
            self.discretization.n = n;
        }
        if let Some(eps) = &o.eps {
            self.discretization.eps = eps.clone();
        }
        if let Some(tol) = o.tol {
            self.solver.tol = tol;
        }
        if let Some(seed) = o.seed {
            self.solver.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        self.validate()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let m = p.components;
        if !(1..=2).contains(&p.dim) {
            return bad("problem.dim", format!("{} is not 1 or 2", p.dim));
        }
        if m == 0 {
            return bad("problem.components", "must be at least 1");
        }
        if p.coupling.len() != m || p.coupling.iter().any(|r| r.len() != m) {
            return bad("problem.coupling", format!("must be a {m}x{m} matrix"));
        }
        if p.coupling.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
            return bad("problem.coupling", "rates must be finite and nonnegative");
        }
        match (&p.potential, &p.potential_table) {
            (None, None) => return bad("problem", "one of `potential` or `potential_table` is required"),
            (Some(_), Some(_)) => return bad("problem", "`potential` and `potential_table` are exclusive"),
            (Some(PotentialSource::PerComponent(list)), None) if list.len() != m => {
                return bad("problem.potential", format!("{} expressions for {m} components", list.len()))
            }
            (None, Some(path)) => {
                let full = self.resolve(path);
                if !full.is_file() {
                    return bad("problem.potential_table", format!("{} does not exist", full.display()));
                }
            }
            _ => {}
        }
        match (p.family, &p.anisotropy) {
            (FamilyName::Anisotropic, None) => {
                return bad("problem.anisotropy", "required for the anisotropic family")
            }
            (FamilyName::Anisotropic, Some(a)) if a.len() != m => {
                return bad("problem.anisotropy", format!("{} matrices for {m} components", a.len()))
            }
            (FamilyName::Quadratic | FamilyName::Quartic, Some(_)) => {
                return bad("problem.anisotropy", "only used by the anisotropic family")
            }
            _ => {}
        }
        if !p.shift.is_finite() {
            return bad("problem.shift", "must be finite");
        }
        let d = &self.discretization;
        if d.n < 8 {
            return bad("discretization.n", format!("{} is below 8", d.n));
        }
        if d.n_q < 3 || d.n_q % 2 == 0 {
            return bad("discretization.n_q", format!("{} must be odd and at least 3", d.n_q));
        }
        if let Some(q) = d.q_max {
            if !(q > 0.0 && q.is_finite()) {
                return bad("discretization.q_max", "must be positive");
            }
        }
        if d.eps.is_empty() || d.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("discretization.eps", "needs at least one positive value");
        }
        if !(d.safety > 0.0 && d.safety <= 1.0) {
            return bad("discretization.safety", "must lie in (0, 1]");
        }
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return bad("solver.tol", "must be positive");
        }
        if s.max_iter == 0 || s.lp_max_iter == 0 {
            return bad("solver", "iteration caps must be positive");
        }
        if !(s.mass_threshold > 0.0 && s.mass_threshold < 1.0) {
            return bad("solver.mass_threshold", "must lie in (0, 1)");
        }
        if !(s.p_max > 0.0 && s.p_max.is_finite()) {
            return bad("solver.p_max", "must be positive");
        }
        if self.output.formats.is_empty() {
            return bad("output.formats", "at least one format is required");
        }
        if self.output.frames < 2 {
            return bad("output.frames", "at least 2 frames");
        }
        if self.adjoint.x0.len() != p.dim {
            return bad("adjoint.x0", format!("needs {} coordinates", p.dim));
        }
        if !(1..=m).contains(&self.adjoint.component) {
            return bad("adjoint.component", format!("must lie in 1..={m}"));
        }
        let c = &self.compare;
        if c.anchors_1.is_empty() || c.anchors_2.is_empty() {
            return bad("compare", "anchor lists must be nonempty");
        }
        if !(c.tol_hyp >= 0.0) || c.tol_con.is_some_and(|t| !(t >= 0.0)) {
            return bad("compare", "tolerances must be nonnegative");
        }
        Ok(())
    }

    pub fn has_format(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    pub fn grid(&self) -> Result<PeriodicGrid> {
        PeriodicGrid::new(self.problem.dim, self.discretization.n, self.problem.components)
            .or_else(|e| bad("discretization", e))
    }

    pub fn coupling(&self) -> Result<CouplingMatrix> {
        CouplingMatrix::new(self.problem.coupling.clone()).or_else(|e| bad("problem.coupling", e))
    }

    fn potential(&self) -> Result<Potential> {
        let p = &self.problem;
        let parse = |src: &str| {
            ExprField::parse(src, p.dim)
                .map(ScalarField::Expr)
                .or_else(|e| bad("problem.potential", e))
        };
        match (&p.potential, &p.potential_table) {
            (Some(PotentialSource::Shared(src)), _) => {
                Potential::uniform(p.dim, p.components, parse(src)?).or_else(|e| bad("problem.potential", e))
            }
            (Some(PotentialSource::PerComponent(list)), _) => {
                let fields = list.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
                Potential::new(p.dim, fields).or_else(|e| bad("problem.potential", e))
            }
            (None, Some(path)) => self.potential_table(&self.resolve(path)),
            (None, None) => bad("problem", "no potential"),
        }
    }

    fn potential_table(&self, path: &Path) -> Result<Potential> {
        let field = "problem.potential_table";
        let m = self.problem.components;
        let mut reader = csv::Reader::from_path(path).or_else(|e| bad(field, e))?;
        let mut columns = vec![Vec::new(); m];
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.or_else(|e| bad(field, e))?;
            if rec.len() != m {
                return bad(field, format!("row {} has {} columns, expected {m}", line + 1, rec.len()));
            }
            for (col, cell) in columns.iter_mut().zip(rec.iter()) {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .or_else(|_| bad(field, format!("row {}: `{cell}` is not a number", line + 1)))?;
                col.push(v);
            }
        }
        let rows = columns[0].len();
        let d = self.problem.dim as u32;
        let n = (rows as f64).powf(1.0 / d as f64).round() as usize;
        if n.pow(d) != rows || n < 2 {
            return bad(field, format!("{rows} rows is not an n^{d} lattice"));
        }
        Potential::from_table(self.problem.dim, n, &columns).or_else(|e| bad(field, e))
    }

    /// The Hamiltonian, including the configured shift.
    pub fn spec(&self) -> Result<HamiltonianSpec> {
        let p = &self.problem;
        let family = match p.family {
            FamilyName::Quadratic => Family::Quadratic,
            FamilyName::Quartic => Family::Quartic,
            FamilyName::Anisotropic => {
                let mats = p.anisotropy.as_deref().unwrap_or_default();
                Family::AnisotropicQuadratic(
                    mats.iter()
                        .map(|rows| Anisotropy::new(p.dim, rows))
                        .collect::<std::result::Result<_, _>>()
                        .or_else(|e| bad("problem.anisotropy", e))?,
                )
            }
        };
        Ok(HamiltonianSpec::new(family, self.potential()?)
            .or_else(|e| bad("problem", e))?
            .with_shift(p.shift))
    }

    /// The configured lattice, or one covering `sup |D_pH|` over
    /// `|p| ≤ lipschitz + 1` when `q_max` is absent.
    pub fn velocity_grid(
        &self,
        spec: &HamiltonianSpec,
        grid: &PeriodicGrid,
        lipschitz: f64,
    ) -> Result<VelocityGrid> {
        let d = &self.discretization;
        match d.q_max {
            Some(q) => VelocityGrid::new(self.problem.dim, q, d.n_q),
            None => VelocityGrid::covering(spec, grid, lipschitz, d.n_q),
        }
        .or_else(|e| bad("discretization", e))
    }

    pub fn cauchy_options(&self) -> CauchyOptions {
        CauchyOptions {
            safety: self.discretization.safety,
            ..Default::default()
        }
    }

    pub fn ergodic_options(&self) -> ErgodicOptions {
        ErgodicOptions {
            tolerance: self.solver.tol,
            max_iterations: self.solver.max_iter,
            ..Default::default()
        }
    }

    pub fn simplex_options(&self) -> SimplexOptions {
        SimplexOptions {
            max_iterations: self.solver.lp_max_iter,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[problem]
potential = "sin(PI*x)^2"
coupling = [[0.0, 1.0], [1.0, 0.0]]
components = 2
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, PathBuf::new())
    }

    #[test]
    fn defaults_fill_missing_blocks() {
        let cfg = parse(BASE).unwrap();
        assert_eq!(cfg.discretization.n, 64);
        assert_eq!(cfg.discretization.eps, vec![0.2, 0.1, 0.05]);
        assert_eq!(cfg.problem.family, FamilyName::Quadratic);
        let spec = cfg.spec().unwrap();
        assert!((spec.potential.value(&[0.5], 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = parse(&format!("{BASE}\n[solver]\ntoll = 1e-3\n")).unwrap_err();
        assert!(err.0.contains("toll"), "{err}");
        assert!(err.0.contains("line 8"), "{err}");
    }

    #[test]
    fn coupling_shape_is_checked() {
        let text = BASE.replace("[[0.0, 1.0], [1.0, 0.0]]", "[[0.0, 1.0]]");
        assert!(parse(&text).unwrap_err().0.starts_with("problem.coupling"));
    }

    #[test]
    fn per_component_potentials_must_match_m() {
        let text = BASE.replace("\"sin(PI*x)^2\"", "[\"1\", \"2\", \"3\"]");
        assert!(parse(&text).unwrap_err().0.contains("3 expressions for 2 components"));
    }

    #[test]
    fn missing_table_is_a_config_error() {
        let text = BASE.replace("potential = \"sin(PI*x)^2\"", "potential_table = \"nope.csv\"");
        assert!(parse(&text).unwrap_err().0.contains("does not exist"));
    }

    #[test]
    fn table_potential_interpolates_samples() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("f1,f2\n");
        for k in 0..16 {
            let x = k as f64 / 16.0;
            let f = (std::f64::consts::PI * x).sin().powi(2);
            body.push_str(&format!("{f},{}\n", 2.0 * f));
        }
        fs::write(dir.path().join("f.csv"), body).unwrap();
        let text = BASE.replace("potential = \"sin(PI*x)^2\"", "potential_table = \"f.csv\"");
        let cfg = RunConfig::parse(&text, dir.path().to_path_buf()).unwrap();
        let spec = cfg.spec().unwrap();
        assert!((spec.potential.value(&[0.3], 0) - (0.3 * std::f64::consts::PI).sin().powi(2)).abs() < 1e-12);
        assert!((spec.potential.value(&[0.3], 1) - 2.0 * (0.3 * std::f64::consts::PI).sin().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn overrides_replace_blocks_and_revalidate() {
        let mut cfg = parse(BASE).unwrap();
        let o = Overrides {
            grid: Some(32),
            eps: Some(vec![0.1]),
            seed: Some(9),
            ..Default::default()
        };
        cfg.apply(&o).unwrap();
        assert_eq!(cfg.discretization.n, 32);
        assert_eq!(cfg.discretization.eps, vec![0.1]);
        assert_eq!(cfg.solver.seed, 9);
        assert!(cfg.apply(&Overrides { grid: Some(2), ..Default::default() }).is_err());
    }

    #[test]
    fn anisotropic_family_needs_matrices() {
        let text = BASE.replace("[problem]", "[problem]\nfamily = \"anisotropic\"");
        assert!(parse(&text).unwrap_err().0.starts_with("problem.anisotropy"));
        let text = BASE.replace("[problem]", "[problem]\nfamily = \"anisotropic\"\nanisotropy = [[[1.0]], [[2.0]]]");
        let spec = parse(&text).unwrap().spec().unwrap();
        assert!(matches!(spec.family, Family::AnisotropicQuadratic(_)));
    }
}
