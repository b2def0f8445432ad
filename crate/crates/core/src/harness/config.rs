use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Many independent quenches, smallest singular vector of `M`.
    MultiQuench,
    /// One trajectory cut into `p` consecutive slices spaced by `t`.
    TimeSliceBaseline,
    /// Moment tensors of a single quench solved by multi-start descent.
    SingleQuench,
    /// Reconstruction with an ansatz that omits weak extra terms.
    Robustness,
    /// Singular gap of `M / sqrt(p)` with a reconstruction on the side.
    GapSweep,
    /// Eigenvalues of `M^T M / p`, with a histogram written next to the output.
    Spectrum,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::MultiQuench,
        Protocol::TimeSliceBaseline,
        Protocol::SingleQuench,
        Protocol::Robustness,
        Protocol::GapSweep,
        Protocol::Spectrum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::MultiQuench => "multi_quench",
            Protocol::TimeSliceBaseline => "time_slice_baseline",
            Protocol::SingleQuench => "single_quench",
            Protocol::Robustness => "robustness",
            Protocol::GapSweep => "gap_sweep",
            Protocol::Spectrum => "spectrum",
        }
    }

    /// Name of the protocol-specific result column.
    pub fn aux_column(self) -> &'static str {
        match self {
            Protocol::MultiQuench | Protocol::TimeSliceBaseline => "error_bound",
            Protocol::SingleQuench => "clusters",
            Protocol::Robustness => "bound_holds",
            Protocol::GapSweep => "min_singular",
            Protocol::Spectrum => "outliers",
        }
    }
}

/// A scalar or an explicit list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Sweep<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Sweep::One(v) => vec![v.clone()],
            Sweep::Many(v) => v.clone(),
        }
    }
}

fn default_epsilon() -> Vec<f64> {
    vec![0.0]
}

fn default_starts() -> usize {
    500
}

fn default_extra_body() -> usize {
    3
}

fn default_relative_strength() -> f64 {
    0.05
}

fn default_bins() -> usize {
    60
}

fn default_range() -> (f64, f64) {
    (0.0, 0.6)
}

fn default_outlier_cut() -> f64 {
    0.02
}

/// Protocol-specific knobs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolOptions {
    /// Interpret every `p` as a multiple of the basis size `n`.
    #[serde(default)]
    pub p_per_operator: bool,
    /// Moment orders for `single_quench`; defaults to `1..=n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<usize>>,
    #[serde(default = "default_starts")]
    pub solver_starts: usize,
    /// Number of omitted terms for `robustness`; defaults to the number of sites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_terms: Option<usize>,
    #[serde(default = "default_extra_body")]
    pub extra_body: usize,
    #[serde(default = "default_relative_strength")]
    pub relative_strength: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_range")]
    pub histogram_range: (f64, f64),
    #[serde(default = "default_outlier_cut")]
    pub outlier_cut: f64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            p_per_operator: false,
            orders: None,
            solver_starts: default_starts(),
            extra_terms: None,
            extra_body: default_extra_body(),
            relative_strength: default_relative_strength(),
            histogram_bins: default_bins(),
            histogram_range: default_range(),
            outlier_cut: default_outlier_cut(),
        }
    }
}

/// One experiment: a model, an ensemble, a protocol and the swept parameters.
///
/// Sweep points are the Cartesian product `t x p x epsilon`, in that nesting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub master_seed: u64,
    pub realizations: usize,
    pub output_path: PathBuf,
    pub t: Sweep<f64>,
    pub p: Sweep<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    pub model: ModelSpec,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub options: ProtocolOptions,
}

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub t: f64,
    /// Number of pairs after applying `p_per_operator`.
    pub p: usize,
    pub epsilon: f64,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        format!("t = {}, p = {}, epsilon = {}", self.t, self.p, self.epsilon)
    }
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config JSON: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse(format!("config TOML: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises to JSON")
    }

    /// All problems at once, one per line.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let ts = self.t.values();
        let ps = self.p.values();
        if ts.is_empty() {
            problems.push("t sweep is empty".to_string());
        }
        if ps.is_empty() {
            problems.push("p sweep is empty".to_string());
        }
        if self.epsilon.is_empty() {
            problems.push("epsilon sweep is empty".to_string());
        }
        if self.realizations == 0 {
            problems.push("realizations must be at least 1".to_string());
        }
        if let Some(t) = ts.iter().find(|t| !t.is_finite() || **t < 0.0) {
            problems.push(format!("t values must be finite and non-negative, got {t}"));
        }
        if self.protocol == Protocol::TimeSliceBaseline && ts.iter().any(|t| *t <= 0.0) {
            problems.push("time_slice_baseline needs t > 0 (the slice spacing)".to_string());
        }
        if ps.contains(&0) {
            problems.push("p values must be at least 1".to_string());
        }
        if let Some(e) = self.epsilon.iter().find(|e| !e.is_finite() || **e < 0.0) {
            problems.push(format!("epsilon values must be finite and non-negative, got {e}"));
        }
        if self.protocol == Protocol::SingleQuench && self.epsilon.iter().any(|e| *e != 0.0) {
            problems.push("single_quench works with noiseless tensors; set epsilon = [0.0]".to_string());
        }
        if self.ensemble.sites != self.model.sites {
            problems.push(format!(
                "ensemble has {} sites but the model has {}",
                self.ensemble.sites, self.model.sites
            ));
        }
        match self.model.basis() {
            Ok(basis) => {
                let n = basis.len();
                if let Some(orders) = &self.options.orders {
                    if orders.is_empty() || orders.contains(&0) {
                        problems.push("moment orders must be non-empty and positive".to_string());
                    }
                }
                if matches!(self.protocol, Protocol::MultiQuench | Protocol::GapSweep | Protocol::Robustness)
                    && self.pair_counts(n).iter().any(|&p| p < 2)
                {
                    problems.push("multi-quench protocols need p >= 2".to_string());
                }
                if self.protocol == Protocol::Spectrum && self.pair_counts(n).iter().any(|&p| p < n) {
                    problems.push(format!("spectrum needs p >= n = {n}"));
                }
            }
            Err(e) => problems.push(format!("model: {e}")),
        }
        if self.ensemble.kind == EnsembleKind::Haar && self.model.sites > 14 {
            problems.push("Haar states beyond 14 sites are not supported".to_string());
        }
        let o = &self.options;
        if o.solver_starts == 0 {
            problems.push("solver_starts must be at least 1".to_string());
        }
        if o.extra_body == 0 || o.extra_body > self.model.sites {
            problems.push(format!("extra_body must lie in 1..={}", self.model.sites));
        }
        if !(o.relative_strength >= 0.0 && o.relative_strength.is_finite()) {
            problems.push("relative_strength must be finite and non-negative".to_string());
        }
        if o.histogram_bins == 0 || !(o.histogram_range.1 > o.histogram_range.0) {
            problems.push("histogram needs bins > 0 and a non-empty range".to_string());
        }
        if self.protocol == Protocol::Robustness && self.model.family == ModelFamily::RandomLocal && o.extra_body <= 2
        {
            problems.push("random_local already contains every 1- and 2-body term; use extra_body >= 3".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("\n")))
        }
    }

    fn pair_counts(&self, n: usize) -> Vec<usize> {
        self.p
            .values()
            .into_iter()
            .map(|p| if self.options.p_per_operator { p * n } else { p })
            .collect()
    }

    /// Sweep points in emission order.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let n = self.model.basis()?.len();
        let mut out = Vec::new();
        for t in self.t.values() {
            for p in self.pair_counts(n) {
                for &epsilon in &self.epsilon {
                    out.push(SweepPoint {
                        index: out.len(),
                        t,
                        p,
                        epsilon,
                    });
                }
            }
        }
        Ok(out)
    }

    /// A commented starting point for the given protocol.
    pub fn template(protocol: Protocol) -> String {
        let (family, sites, t, p, eps, realizations) = match protocol {
            Protocol::MultiQuench => ("random_local", 8, "[1.0]", "[2]", "[0.1]", 200),
            Protocol::TimeSliceBaseline => ("random_local", 8, "[1.0]", "[2, 4, 8]", "[0.1]", 50),
            Protocol::SingleQuench => ("random_tfim", 4, "[1.0]", "[1]", "[0.0]", 5),
            Protocol::Robustness => ("random_local", 6, "[2.0]", "[2]", "[0.0]", 50),
            Protocol::GapSweep => ("random_local", 8, "[10.0]", "[1, 2, 4, 8]", "[0.0]", 20),
            Protocol::Spectrum => ("random_local", 8, "[10.0]", "[15000]", "[0.0]", 1),
        };
        let per_op = !matches!(protocol, Protocol::SingleQuench | Protocol::Spectrum);
        format!(
            r#"# Experiment configuration. Lists are swept as a Cartesian product t x p x epsilon.
protocol = "{name}"
master_seed = 1
realizations = {realizations}
output_path = "{name}.csv"
# Quench times (for time_slice_baseline: the slice spacing).
t = {t}
# Number of quench pairs; multiples of the basis size when p_per_operator = true.
p = {p}
# Half-width of the uniform measurement error.
epsilon = {eps}

[model]
# tfim_yy | ising_lt | heisenberg | random_tfim | random_local
family = "{family}"
sites = {sites}
boundary = "open"
coupling_seed = 0
coupling_range = [-1.0, 1.0]

[ensemble]
# bloch_product | xyz_product | haar
kind = "bloch_product"
seed = 0
sites = {sites}

[options]
p_per_operator = {per_op}
solver_starts = 500
extra_body = 3
relative_strength = 0.05
histogram_bins = 60
histogram_range = [0.0, 0.6]
outlier_cut = 0.02
"#,
            name = protocol.name(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_parse_and_validate() {
        for p in Protocol::ALL {
            let cfg = ExperimentConfig::parse(&ExperimentConfig::template(p)).unwrap();
            assert_eq!(cfg.protocol, p);
            assert!(!cfg.sweep_points().unwrap().is_empty());
        }
    }

    #[test]
    fn toml_and_json_round_trip() {
        let cfg = ExperimentConfig::parse(&ExperimentConfig::template(Protocol::GapSweep)).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::parse(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn scalar_sweeps_are_accepted() {
        let text = ExperimentConfig::template(Protocol::MultiQuench)
            .replace("t = [1.0]", "t = 1.5")
            .replace("p = [2]", "p = 3");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let pts = cfg.sweep_points().unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].t, 1.5);
        assert_eq!(pts[0].p, 3 * cfg.model.basis().unwrap().len());
    }

    #[test]
    fn empty_sweeps_and_bad_fields_are_reported_together() {
        let text = ExperimentConfig::template(Protocol::MultiQuench)
            .replace("t = [1.0]", "t = []")
            .replace("realizations = 200", "realizations = 0");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.is_validation());
        let msg = err.to_string();
        assert!(msg.contains("t sweep is empty") && msg.contains("realizations"), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = ExperimentConfig::template(Protocol::MultiQuench) + "\nbogus = 1\n";
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.is_validation(), "{err}");
    }

    #[test]
    fn sweep_order_is_t_then_p_then_epsilon() {
        let text = ExperimentConfig::template(Protocol::MultiQuench)
            .replace("t = [1.0]", "t = [1.0, 2.0]")
            .replace("epsilon = [0.1]", "epsilon = [0.0, 0.1]");
        let pts = ExperimentConfig::parse(&text).unwrap().sweep_points().unwrap();
        let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.t, p.epsilon)).collect();
        assert_eq!(coords, vec![(1.0, 0.0), (1.0, 0.1), (2.0, 0.0), (2.0, 0.1)]);
        assert!(pts.iter().enumerate().all(|(i, p)| p.index == i));
    }
}
