use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::GramianConfig;
use super::measures::{check_symmetric, logdet, min_max_eigenvalue};
use crate::dynamics::{simulate, step_count, ObservedSystem};
use crate::error::{Error, Result};

/// Symmetric positive semidefinite empirical observability Gramian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gramian {
    pub matrix: DMatrix<f64>,
    pub n: usize,
    /// Sensor sites whose outputs built this Gramian (0-based).
    pub sites: Vec<usize>,
}

impl Gramian {
    pub fn logdet(&self) -> f64 {
        logdet(&self.matrix).expect("Gramian is symmetric")
    }

    pub fn extreme_eigenvalues(&self) -> (f64, f64) {
        min_max_eigenvalue(&self.matrix).expect("Gramian is symmetric")
    }
}

/// Per-site Gramians `W_i` from one shared set of perturbed trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianBank {
    pub per_site: Vec<Gramian>,
    pub fingerprint: String,
}

impl GramianBank {
    /// Wrap precomputed per-site matrices (e.g. synthetic banks).
    pub fn from_matrices(mats: Vec<DMatrix<f64>>, fingerprint: impl Into<String>) -> Result<Self> {
        let n = mats.first().map_or(0, |m| m.nrows());
        let per_site = mats
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                check_symmetric(&m)?;
                if m.nrows() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: m.nrows(),
                    });
                }
                Ok(Gramian {
                    matrix: m,
                    n,
                    sites: vec![k],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            per_site,
            fingerprint: fingerprint.into(),
        })
    }

    /// Seeded bank of `g` random rank-`rank` PSD matrices `B B^T` of size `n`.
    pub fn random_low_rank(g: usize, n: usize, rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats = (0..g)
            .map(|_| {
                let b = DMatrix::<f64>::from_fn(n, rank, |_, _| StandardNormal.sample(&mut rng));
                let w = &b * b.transpose();
                (&w + w.transpose()) * 0.5
            })
            .collect();
        Self::from_matrices(mats, format!("random-{g}-{n}-{rank}-{seed}"))
            .expect("symmetric by construction")
    }

    pub fn n_sites(&self) -> usize {
        self.per_site.len()
    }

    pub fn dim(&self) -> usize {
        self.per_site.first().map_or(0, |w| w.n)
    }

    /// `sum_{i in sites} W_i`
    pub fn sum(&self, sites: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        let mut w = DMatrix::zeros(n, n);
        for &s in sites {
            w += &self.per_site[s].matrix;
        }
        w
    }

    pub fn sum_gramian(&self, sites: &[usize]) -> Gramian {
        Gramian {
            matrix: self.sum(sites),
            n: self.dim(),
            sites: sites.to_vec(),
        }
    }
}

/// Output deviations of one `(direction, size)` pair, split by site: for site
/// `s`, a `(K * q) x n` matrix whose column `i` is the deviation series of the
/// rollout started from `x_ref + c T e_i`.
fn site_deviations<S: ObservedSystem + ?Sized>(
    sys: &S,
    cfg: &GramianConfig,
    x_ref: &DVector<f64>,
    reference: &[DMatrix<f64>],
    l: usize,
    m: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let n = sys.dim();
    let q = sys.outputs_per_site();
    let g = sys.n_sites();
    let k_pts = reference.len();
    let dir = &cfg.directions[l];
    let c = cfg.sizes[m];
    // Collect every outcome first so the reported failure is the lowest state index.
    let outcomes: Vec<Result<Vec<DMatrix<f64>>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x_init = x_ref + dir.column(i, n) * c;
            let traj = simulate(sys, &x_init, cfg.horizon, cfg.dt).map_err(|_| {
                Error::PerturbationBlowup {
                    direction: l,
                    size: m,
                    state: i,
                }
            })?;
            Ok(traj.states[..k_pts]
                .iter()
                .zip(reference)
                .map(|(x, y0)| sys.site_outputs(x) - y0)
                .collect())
        })
        .collect();
    let columns = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = vec![DMatrix::zeros(k_pts * q, n); g];
    for (i, series) in columns.iter().enumerate() {
        for (k, dev) in series.iter().enumerate() {
            for s in 0..g {
                for t in 0..q {
                    out[s][(k * q + t, i)] = dev[(t, s)];
                }
            }
        }
    }
    Ok(out)
}

/// Accumulate `sum_l sum_m 1/(r s c_m^2) sum_k T_l Psi_k T_l^T dt` where the
/// `Psi` of each `(l, m)` is formed by `psi(deviations)`.
///
/// Per-direction subtotals are summed last so that reordering `{I, -I}`
/// reproduces the result bit for bit.
fn accumulate<S, F>(
    sys: &S,
    cfg: &GramianConfig,
    x_ref: &DVector<f64>,
    mut psi: F,
) -> Result<Vec<DMatrix<f64>>>
where
    S: ObservedSystem + ?Sized,
    F: FnMut(&[DMatrix<f64>]) -> Vec<DMatrix<f64>>,
{
    let n = sys.dim();
    cfg.validate(n)?;
    let x_ref = cfg.x_ref.as_ref().unwrap_or(x_ref);
    if x_ref.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x_ref.len(),
        });
    }
    let k_pts = step_count(cfg.horizon, cfg.dt)?;
    let nominal = simulate(sys, x_ref, cfg.horizon, cfg.dt)?;
    let reference: Vec<DMatrix<f64>> = nominal.states[..k_pts]
        .iter()
        .map(|x| sys.site_outputs(x))
        .collect();
    let (r, s) = (cfg.directions.len() as f64, cfg.sizes.len() as f64);
    let mut totals: Option<Vec<DMatrix<f64>>> = None;
    for (l, dir) in cfg.directions.iter().enumerate() {
        let mut sub: Option<Vec<DMatrix<f64>>> = None;
        for (m, &c) in cfg.sizes.iter().enumerate() {
            let dev = site_deviations(sys, cfg, x_ref, &reference, l, m)?;
            let weight = cfg.dt / (r * s * c * c);
            let terms: Vec<DMatrix<f64>> = psi(&dev)
                .into_iter()
                .map(|p| dir.congruence(p) * weight)
                .collect();
            sub = Some(match sub {
                None => terms,
                Some(acc) => acc.into_iter().zip(terms).map(|(a, b)| a + b).collect(),
            });
        }
        let sub = sub.expect("sizes nonempty");
        totals = Some(match totals {
            None => sub,
            Some(acc) => acc.into_iter().zip(sub).map(|(a, b)| a + b).collect(),
        });
    }
    let totals = totals.expect("directions nonempty");
    totals
        .into_iter()
        .map(|w| {
            let w = (&w + w.transpose()) * 0.5;
            if w.iter().all(|v| v.is_finite()) {
                Ok(w)
            } else {
                Err(Error::NonFinite("Gramian accumulation"))
            }
        })
        .collect()
}

/// Joint empirical observability Gramian of the outputs at `sites`.
///
/// `x_default` supplies the reference state when the config has none.
pub fn empirical_gramian_of<S: ObservedSystem + ?Sized>(
    sys: &S,
    x_default: &DVector<f64>,
    sites: &[usize],
    cfg: &GramianConfig,
) -> Result<Gramian> {
    if sites.is_empty() {
        return Err(Error::NoOutputs);
    }
    if let Some(&bad) = sites.iter().find(|&&s| s >= sys.n_sites()) {
        return Err(Error::InvalidArgument(format!(
            "sensor site {bad} out of range"
        )));
    }
    let mut w = accumulate(sys, cfg, x_default, |dev| {
        let rows: usize = sites.iter().map(|&s| dev[s].nrows()).sum();
        let n = dev[0].ncols();
        let mut stacked = DMatrix::zeros(rows, n);
        let mut r0 = 0;
        for &s in sites {
            let h = dev[s].nrows();
            stacked.view_mut((r0, 0), (h, n)).copy_from(&dev[s]);
            r0 += h;
        }
        vec![stacked.transpose() * stacked]
    })?;
    let matrix = w.pop().expect("one matrix");
    Ok(Gramian {
        n: matrix.nrows(),
        matrix,
        sites: sites.to_vec(),
    })
}

/// Per-site Gramians sharing one set of perturbed rollouts.
pub fn per_site_bank<S: ObservedSystem + ?Sized>(
    sys: &S,
    x_default: &DVector<f64>,
    cfg: &GramianConfig,
) -> Result<GramianBank> {
    let mats = accumulate(sys, cfg, x_default, |dev| {
        dev.iter().map(|d| d.transpose() * d).collect()
    })?;
    let n = sys.dim();
    Ok(GramianBank {
        per_site: mats
            .into_iter()
            .enumerate()
            .map(|(k, matrix)| Gramian {
                matrix,
                n,
                sites: vec![k],
            })
            .collect(),
        fingerprint: cfg.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::gramian::{linear_gramian_oracle, Direction, LinearSystem};
    use crate::network::MachineModel;
    use crate::testutil::{wscc9_bank, wscc9_model};

    fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    /// Seeded stable 4-state system with slow modes.
    fn slow_system(seed: u64) -> LinearSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.3..0.3));
        for k in 0..4 {
            a[(k, k)] -= 1.0;
        }
        let c = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        LinearSystem::single_output_sites(a, c).unwrap()
    }

    fn is_hurwitz(a: &DMatrix<f64>) -> bool {
        a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
    }

    #[test]
    fn scalar_decay_gives_one_half() {
        let sys = LinearSystem::single_output_sites(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let cfg = GramianConfig::with_grid(10.0, 1.0 / 120.0);
        let w = empirical_gramian_of(&sys, &DVector::zeros(1), &[0], &cfg).unwrap();
        assert!(
            (w.matrix[(0, 0)] - 0.5).abs() < 0.005,
            "{}",
            w.matrix[(0, 0)]
        );
    }

    #[test]
    fn oracle_closed_forms() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let w = linear_gramian_oracle(&a, &DMatrix::from_element(1, 1, 1.0), 30.0, 0.01).unwrap();
        assert!((w[(0, 0)] - 0.5).abs() < 1e-9);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let w = linear_gramian_oracle(&a, &DMatrix::zeros(1, 2), 5.0, 0.01).unwrap();
        assert_eq!(w, DMatrix::zeros(2, 2));
    }

    #[test]
    fn seeded_linear_system_matches_oracle() {
        let sys = slow_system(42);
        assert!(is_hurwitz(&sys.a));
        let cfg = GramianConfig::with_grid(20.0, 0.005);
        let w = empirical_gramian_of(&sys, &DVector::zeros(4), &[0, 1], &cfg).unwrap();
        let oracle = linear_gramian_oracle(&sys.a, &sys.c, 20.0, 0.005).unwrap();
        assert!(
            rel_frobenius(&w.matrix, &oracle) < 0.01,
            "{}",
            rel_frobenius(&w.matrix, &oracle)
        );
    }

    #[test]
    fn linear_gramian_ignores_perturbation_size() {
        let sys = slow_system(7);
        let x = DVector::zeros(4);
        let base = empirical_gramian_of(
            &sys,
            &x,
            &[0, 1],
            &GramianConfig {
                sizes: vec![1.0],
                ..GramianConfig::with_grid(5.0, 0.01)
            },
        )
        .unwrap();
        for c in [0.25, 0.5, 0.75] {
            let cfg = GramianConfig {
                sizes: vec![c],
                ..GramianConfig::with_grid(5.0, 0.01)
            };
            let w = empirical_gramian_of(&sys, &x, &[0, 1], &cfg).unwrap();
            assert!(rel_frobenius(&w.matrix, &base.matrix) < 1e-6);
        }
    }

    #[test]
    fn linear_gramian_ignores_direction_basis() {
        let sys = slow_system(3);
        let x = DVector::zeros(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let plain =
            empirical_gramian_of(&sys, &x, &[0, 1], &GramianConfig::with_grid(5.0, 0.01)).unwrap();
        let cfg = GramianConfig {
            directions: vec![Direction::Orthogonal(t)],
            ..GramianConfig::with_grid(5.0, 0.01)
        };
        let rotated = empirical_gramian_of(&sys, &x, &[0, 1], &cfg).unwrap();
        assert!(rel_frobenius(&rotated.matrix, &plain.matrix) < 1e-10);
    }

    #[test]
    fn config_validation() {
        let sys = slow_system(3);
        let x = DVector::zeros(4);
        let bad_t = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, 1.1]));
        let cases = [
            GramianConfig {
                directions: vec![Direction::Orthogonal(bad_t)],
                ..Default::default()
            },
            GramianConfig {
                sizes: vec![0.5, 0.0],
                ..Default::default()
            },
            GramianConfig {
                sizes: vec![],
                ..Default::default()
            },
            GramianConfig::with_grid(0.0, 0.1),
            GramianConfig {
                x_ref: Some(DVector::zeros(3)),
                ..Default::default()
            },
        ];
        for cfg in cases {
            assert!(
                empirical_gramian_of(&sys, &x, &[0], &cfg).is_err(),
                "{cfg:?}"
            );
        }
        assert!(matches!(
            empirical_gramian_of(&sys, &x, &[], &GramianConfig::default()),
            Err(Error::NoOutputs)
        ));
        let a = GramianConfig::default();
        assert_eq!(a.fingerprint(), GramianConfig::default().fingerprint());
        assert_ne!(
            a.fingerprint(),
            GramianConfig::with_grid(5.0, 0.01).fingerprint()
        );
    }

    #[test]
    fn blowup_names_the_perturbation() {
        let sys = LinearSystem::single_output_sites(
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 900.0])),
            DMatrix::from_element(1, 2, 1.0),
        )
        .unwrap();
        let err = empirical_gramian_of(
            &sys,
            &DVector::zeros(2),
            &[0],
            &GramianConfig::with_grid(5.0, 0.01),
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::PerturbationBlowup {
                    direction: 0,
                    size: 0,
                    state: 1
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn joint_gramian_equals_sum_of_site_gramians() {
        for kind in [MachineModel::Classical, MachineModel::Transient] {
            let model = wscc9_model(kind);
            let bank = per_site_bank(&model, &model.x0, &GramianConfig::default()).unwrap();
            assert_eq!(bank.n_sites(), 3);
            assert_eq!(bank.dim(), model.dim());
            for sites in [vec![0usize], vec![1, 2], vec![0, 1, 2]] {
                let joint =
                    empirical_gramian_of(&model, &model.x0, &sites, &GramianConfig::default())
                        .unwrap();
                assert!(
                    rel_frobenius(&bank.sum(&sites), &joint.matrix) <= 1e-8,
                    "{kind:?} {sites:?}"
                );
            }
        }
    }

    #[test]
    fn swapping_directions_is_bit_identical() {
        let model = wscc9_model(MachineModel::Classical);
        let fwd = GramianConfig::default();
        let rev = GramianConfig {
            directions: vec![Direction::Negative, Direction::Positive],
            ..Default::default()
        };
        let a = empirical_gramian_of(&model, &model.x0, &[0, 2], &fwd).unwrap();
        let b = empirical_gramian_of(&model, &model.x0, &[0, 2], &rev).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn wscc_classical_table_values() {
        let bank = wscc9_bank(MachineModel::Classical);
        assert_eq!(bank.per_site[0].matrix.shape(), (6, 6));
        let table = [
            (vec![0], 8.54),
            (vec![1], 19.61),
            (vec![2], 22.33),
            (vec![0, 1], 21.34),
            (vec![0, 2], 24.40),
            (vec![1, 2], 26.47),
        ];
        for (sites, published) in table {
            let v = bank.sum_gramian(&sites).logdet();
            assert!((v - published).abs() < 0.01 * published, "{sites:?}: {v}");
        }
        let (lo, hi) = bank.per_site[0].extreme_eigenvalues();
        assert!(
            (lo - 0.0082).abs() < 0.0005 && (hi - 1.14e3).abs() < 10.0,
            "{lo} {hi}"
        );
    }

    #[test]
    fn wscc_gramians_are_symmetric_psd_and_monotone() {
        for kind in [MachineModel::Classical, MachineModel::Transient] {
            let bank = wscc9_bank(kind);
            for mask in 1u32..8 {
                let sites: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
                let w = bank.sum_gramian(&sites);
                assert!(w.matrix == w.matrix.transpose());
                let (lo, hi) = w.extreme_eigenvalues();
                assert!(lo >= -1e-8 * hi);
                for extra in (0..3).filter(|k| !sites.contains(k)) {
                    let mut bigger = sites.clone();
                    bigger.push(extra);
                    assert!(bank.sum_gramian(&bigger).logdet() >= w.logdet() - 1e-9);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn linear_additivity_and_psd(seed in 0u64..10_000) {
            let sys = slow_system(seed);
            let cfg = GramianConfig::with_grid(3.0, 0.02);
            let x = DVector::zeros(4);
            let bank = per_site_bank(&sys, &x, &cfg).unwrap();
            let joint = empirical_gramian_of(&sys, &x, &[0, 1], &cfg).unwrap();
            prop_assert!(rel_frobenius(&bank.sum(&[0, 1]), &joint.matrix) <= 1e-8);
            let (lo, hi) = joint.extreme_eigenvalues();
            prop_assert!(lo >= -1e-8 * hi);
        }
    }
}
