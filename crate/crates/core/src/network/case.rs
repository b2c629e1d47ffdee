use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// A network bus. Powers are per-unit on the case base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    /// Active generation scheduled at a PV bus. Ignored at the slack.
    #[serde(default)]
    pub p_gen: f64,
    #[serde(default = "one")]
    pub v_setpoint: f64,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, split evenly between the ends.
    #[serde(default)]
    pub b_charging: f64,
    #[serde(default = "yes")]
    pub status: bool,
}

impl Branch {
    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    Second,
    Fourth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub model_order: ModelOrder,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "K_D", default)]
    pub k_d: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub x_d_prime: f64,
    pub x_q_prime: f64,
    #[serde(rename = "T_d0_prime")]
    pub t_d0_prime: f64,
    #[serde(rename = "T_q0_prime")]
    pub t_q0_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSystemCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl PowerSystemCase {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let mut case: PowerSystemCase = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        case.validate()?;
        case.generators.sort_by_key(|g| g.id);
        Ok(case)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCase(msg));
        if !(self.base_mva > 0.0) {
            return bad("base_mva must be positive".into());
        }
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return bad(format!("duplicate bus id {}", b.id));
            }
            if !(b.v_setpoint > 0.0) {
                return bad(format!("bus {} has non-positive v_setpoint", b.id));
            }
        }
        let slack = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slack != 1 {
            return bad(format!("exactly one slack bus required, found {slack}"));
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !ids.contains(&end) {
                    return bad(format!(
                        "branch {}-{} references missing bus {end}",
                        br.from, br.to
                    ));
                }
            }
            if br.from == br.to {
                return bad(format!("branch {}-{} is a self loop", br.from, br.to));
            }
        }
        let mut gen_buses = HashSet::new();
        for g in &self.generators {
            if !ids.contains(&g.bus) {
                return bad(format!("generator {} sits on missing bus {}", g.id, g.bus));
            }
            if !gen_buses.insert(g.bus) {
                return bad(format!("more than one generator on bus {}", g.bus));
            }
            if !(g.h > 0.0) {
                return bad(format!("generator {} must have H > 0", g.id));
            }
            if !(g.x_d_prime > 0.0) {
                return bad(format!("generator {} must have x_d_prime > 0", g.id));
            }
            if g.model_order == ModelOrder::Fourth
                && !(g.t_d0_prime > 0.0 && g.t_q0_prime > 0.0 && g.x_q_prime > 0.0)
            {
                return bad(format!(
                    "fourth-order generator {} needs positive T_d0_prime, T_q0_prime and x_q_prime",
                    g.id
                ));
            }
        }
        let mut gids: Vec<usize> = self.generators.iter().map(|g| g.id).collect();
        gids.sort_unstable();
        if gids.is_empty() {
            return bad("case has no generators".into());
        }
        if gids.iter().enumerate().any(|(k, &id)| id != k + 1) {
            return bad(format!(
                "generator ids must be 1..g without gaps, got {gids:?}"
            ));
        }
        Ok(())
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// Bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(k, b)| (b.id, k))
            .collect()
    }

    pub fn generator_buses(&self) -> HashSet<usize> {
        self.generators.iter().map(|g| g.bus).collect()
    }

    /// Position of the branch joining `a` and `b` (either orientation).
    pub fn find_branch(&self, a: usize, b: usize) -> Option<usize> {
        self.branches.iter().position(|br| br.connects(a, b))
    }

    /// Bus positions carrying a nonzero load, in bus order.
    pub fn load_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.p_load != 0.0 || b.q_load != 0.0)
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<PowerSystemCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    PowerSystemCase::from_json_str(&text, &path.display().to_string())
}

/// Seeded load factors `alpha_i ~ U(2 - gamma, gamma)`, one per load bus.
pub fn sample_load_factors(n_loads: usize, gamma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(1.0..2.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in [1, 2), got {gamma}"
        )));
    }
    if gamma == 1.0 {
        return Ok(vec![1.0; n_loads]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist =
        Uniform::new(2.0 - gamma, gamma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..n_loads).map(|_| dist.sample(&mut rng)).collect())
}

/// Scale active and reactive load at every load bus by its own factor.
///
/// `alpha` has one entry per load bus, in the order of [`PowerSystemCase::load_buses`].
pub fn apply_load_scaling(case: &PowerSystemCase, alpha: &[f64]) -> Result<PowerSystemCase> {
    let loads = case.load_buses();
    if alpha.len() != loads.len() {
        return Err(Error::Dimension {
            expected: loads.len(),
            got: alpha.len(),
        });
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "load scaling factors must be positive, got {a}"
        )));
    }
    let mut out = case.clone();
    for (&k, &a) in loads.iter().zip(alpha) {
        out.buses[k].p_load *= a;
        out.buses[k].q_load *= a;
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::data_path;
    use crate::ErrorKind;

    fn wscc_text() -> String {
        std::fs::read_to_string(data_path("wscc9.json")).unwrap()
    }

    fn edited(f: impl FnOnce(&mut serde_json::Value)) -> Result<PowerSystemCase> {
        let mut v: serde_json::Value = serde_json::from_str(&wscc_text()).unwrap();
        f(&mut v);
        PowerSystemCase::from_json_str(&v.to_string(), "edited")
    }

    #[test]
    fn wscc_fixture_shape() {
        let case = load_case(data_path("wscc9.json")).unwrap();
        assert_eq!(
            (case.buses.len(), case.branches.len(), case.n_gen()),
            (9, 9, 3)
        );
        assert_eq!(case.load_buses(), vec![4, 5, 7]);
        assert_eq!(case.find_branch(7, 5), Some(3));
        let back = PowerSystemCase::from_json_str(&case.to_json_string(), "roundtrip").unwrap();
        assert_eq!(back, case);
    }

    #[test]
    fn two_slack_buses_rejected() {
        let err = edited(|v| v["buses"][3]["kind"] = "slack".into()).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Validation);
        assert!(err.to_string().contains("slack"));
    }

    #[test]
    fn generator_on_missing_bus_rejected() {
        let err = edited(|v| v["generators"][2]["bus"] = 42.into()).unwrap_err();
        assert!(err.to_string().contains("missing bus 42"), "{err}");
    }

    type Mutation = (&'static str, fn(&mut serde_json::Value));

    #[test]
    fn other_invariants_rejected() {
        let cases: [Mutation; 5] = [
            ("H > 0", |v| v["generators"][0]["H"] = 0.0.into()),
            ("x_d_prime", |v| {
                v["generators"][1]["x_d_prime"] = (-0.1).into()
            }),
            ("without gaps", |v| v["generators"][2]["id"] = 7.into()),
            ("missing bus", |v| v["branches"][0]["to"] = 99.into()),
            ("duplicate bus", |v| v["buses"][8]["id"] = 8.into()),
        ];
        for (needle, f) in cases {
            let err = edited(f).unwrap_err();
            assert_eq!(err.kind(), ErrorKind::Validation);
            assert!(err.to_string().contains(needle), "{needle}: {err}");
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = PowerSystemCase::from_json_str(
            "{\n  \"base_mva\": 100,\n  \"buses\": [oops]\n}",
            "bad.json",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "bad.json");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = edited(|v| v["buses"][0]["voltage"] = 1.0.into()).unwrap_err();
        assert!(err.to_string().contains("voltage"));
        assert!(load_case("/nonexistent/case.json").is_err());
    }

    #[test]
    fn load_scaling_is_pointwise() {
        let case = load_case(data_path("wscc9.json")).unwrap();
        assert_eq!(apply_load_scaling(&case, &[1.0; 3]).unwrap(), case);
        let scaled = apply_load_scaling(&case, &[1.0, 1.05, 1.0]).unwrap();
        assert_eq!(scaled.buses[5].p_load, 0.9 * 1.05);
        assert_eq!(scaled.buses[5].q_load, 0.3 * 1.05);
        for k in [4, 7] {
            assert_eq!(scaled.buses[k], case.buses[k]);
        }
        assert_eq!(scaled.branches, case.branches);
        assert!(apply_load_scaling(&case, &[1.0; 2]).is_err());
        assert!(apply_load_scaling(&case, &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn seeded_load_factors_reproduce() {
        let a = sample_load_factors(3, 1.05, 7).unwrap();
        assert_eq!(a, sample_load_factors(3, 1.05, 7).unwrap());
        assert!(a.iter().all(|x| (0.95..1.05).contains(x)));
        assert_ne!(a, sample_load_factors(3, 1.05, 8).unwrap());
        assert_eq!(sample_load_factors(4, 1.0, 1).unwrap(), vec![1.0; 4]);
        assert!(sample_load_factors(3, 0.9, 1).is_err());
        assert!(sample_load_factors(3, 2.0, 1).is_err());
        let case = load_case(data_path("wscc9.json")).unwrap();
        let c1 = apply_load_scaling(&case, &a).unwrap();
        let c2 = apply_load_scaling(&case, &sample_load_factors(3, 1.05, 7).unwrap()).unwrap();
        assert_eq!(c1.to_json_string(), c2.to_json_string());
    }
}
