//! Ground-truth generation: grouped clustered channels, pilots and noisy
//! observations.
//!
//! Each group owns `shared_clusters` cluster centres that every member reuses;
//! each user additionally owns `individual_clusters` private centres. Every
//! cluster emits `subpaths_per_cluster` sub-paths whose azimuths are spread
//! uniformly over the angular spread around the centre.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::steering::{steering, AngleGrid, ArrayGeometry};

const STREAM_PILOTS: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// How sub-path azimuths relate to the dictionary grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AngleLayout {
    /// Cluster centres uniform over the azimuth span, sub-paths uniform within
    /// the angular spread.
    Clustered,
    /// Cluster centres are distinct points of a `grid_points` uniform grid and
    /// every sub-path sits exactly on its centre.
    OnGrid { grid_points: usize },
    /// As `OnGrid`, but every sub-path is offset uniformly within half a grid
    /// interval of its centre.
    OffGrid { grid_points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainModel {
    /// `CN(0, 1)` sub-path gains.
    ComplexGaussian,
    /// Unit-modulus gains with uniform phase.
    UnitModulus,
}

/// Parameters of the ground-truth generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScenario {
    pub n_groups: usize,
    pub n_users: usize,
    pub shared_clusters: usize,
    pub individual_clusters: usize,
    pub subpaths_per_cluster: usize,
    /// Total angular spread of a cluster, in degrees.
    pub angular_spread_deg: f64,
    /// Upper bound of the cluster elevation centres for planar arrays, in degrees.
    pub max_elevation_deg: f64,
    pub layout: AngleLayout,
    pub gains: GainModel,
    pub seed: u64,
}

impl Default for GroupScenario {
    fn default() -> Self {
        GroupScenario {
            n_groups: 2,
            n_users: 12,
            shared_clusters: 3,
            individual_clusters: 0,
            subpaths_per_cluster: 20,
            angular_spread_deg: 10.0,
            max_elevation_deg: 60.0,
            layout: AngleLayout::Clustered,
            gains: GainModel::ComplexGaussian,
            seed: 0,
        }
    }
}

impl GroupScenario {
    pub fn n_clusters(&self) -> usize {
        self.shared_clusters + self.individual_clusters
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.n_users == 0 {
            return Err(Error::Config("need at least one group and one user".into()));
        }
        if self.n_groups > self.n_users {
            return Err(Error::Config(format!(
                "{} groups cannot be populated by {} users",
                self.n_groups, self.n_users
            )));
        }
        if self.n_clusters() == 0 {
            return Err(Error::Config("scenario needs at least one cluster".into()));
        }
        if self.subpaths_per_cluster == 0 {
            return Err(Error::Config("clusters need at least one sub-path".into()));
        }
        if !(self.angular_spread_deg >= 0.0) {
            return Err(Error::Config("angular spread must be non-negative".into()));
        }
        if let AngleLayout::OnGrid { grid_points } | AngleLayout::OffGrid { grid_points } = self.layout {
            if grid_points < self.n_clusters() {
                return Err(Error::Config("grid too small for distinct on-grid clusters".into()));
            }
        }
        Ok(())
    }
}

/// A cluster centre direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubPath {
    pub azimuth: f64,
    pub elevation: f64,
    pub gain: Complex64,
    /// Index into the user's cluster list (shared clusters first).
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserChannel {
    pub group: usize,
    pub individual_centers: Vec<Direction>,
    pub paths: Vec<SubPath>,
}

/// One draw of the grouped multi-user channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub shared_centers: Vec<Vec<Direction>>,
    pub users: Vec<UserChannel>,
    pub channels: Vec<CVec>,
}

impl ChannelRealization {
    pub fn group_labels(&self) -> Vec<usize> {
        self.users.iter().map(|u| u.group).collect()
    }

    /// All cluster centres of user `k`, shared ones first.
    pub fn user_centers(&self, k: usize) -> Vec<Direction> {
        let u = &self.users[k];
        let mut c = self.shared_centers[u.group].clone();
        c.extend_from_slice(&u.individual_centers);
        c
    }

    /// Write one row per sub-path for external inspection.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["user", "group", "cluster", "kind", "azimuth", "elevation", "gain_re", "gain_im"])?;
        let n_shared = self.shared_centers.first().map_or(0, Vec::len);
        for (k, u) in self.users.iter().enumerate() {
            for p in &u.paths {
                let kind = if p.cluster < n_shared { "shared" } else { "individual" };
                w.write_record([
                    k.to_string(),
                    u.group.to_string(),
                    p.cluster.to_string(),
                    kind.to_string(),
                    format!("{:.17e}", p.azimuth),
                    format!("{:.17e}", p.elevation),
                    format!("{:.17e}", p.gain.re),
                    format!("{:.17e}", p.gain.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draw cluster structure, sub-path angles and gains for every user.
pub fn draw_scenario(spec: &GroupScenario, geometry: &ArrayGeometry) -> Result<ChannelRealization> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = geometry.azimuth_span();
    let planar = geometry.is_planar();
    let max_el = spec.max_elevation_deg.to_radians().clamp(0.0, FRAC_PI_2);
    let grid = match spec.layout {
        AngleLayout::Clustered => None,
        AngleLayout::OnGrid { grid_points } | AngleLayout::OffGrid { grid_points } => {
            Some(AngleGrid::uniform(geometry, grid_points)?)
        }
    };

    // Grid indices already used by a user, so on-grid clusters stay distinct.
    let draw_center = |rng: &mut ChaCha8Rng, taken: &mut Vec<usize>| -> Direction {
        let elevation = if planar { rng.random_range(0.0..=max_el) } else { 0.0 };
        let azimuth = match &grid {
            None => rng.random_range(lo..hi),
            Some(g) => loop {
                let idx = rng.random_range(0..g.len());
                if !taken.contains(&idx) {
                    taken.push(idx);
                    break g.points[idx];
                }
            },
        };
        Direction { azimuth, elevation }
    };

    let mut order: Vec<usize> = (0..spec.n_users).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![0; spec.n_users];
    for (slot, &k) in order.iter().enumerate() {
        labels[k] = slot % spec.n_groups;
    }

    let mut shared_taken: Vec<Vec<usize>> = vec![Vec::new(); spec.n_groups];
    let shared_centers: Vec<Vec<Direction>> = (0..spec.n_groups)
        .map(|g| {
            (0..spec.shared_clusters)
                .map(|_| draw_center(&mut rng, &mut shared_taken[g]))
                .collect()
        })
        .collect();

    let n_c = spec.n_clusters();
    let amplitude = 1.0 / ((n_c * spec.subpaths_per_cluster) as f64).sqrt();
    let half_spread = spec.angular_spread_deg.to_radians() / 2.0;
    let mut users = Vec::with_capacity(spec.n_users);
    for &group in &labels {
        let mut taken = shared_taken[group].clone();
        let individual_centers: Vec<Direction> = (0..spec.individual_clusters)
            .map(|_| draw_center(&mut rng, &mut taken))
            .collect();
        let mut paths = Vec::with_capacity(n_c * spec.subpaths_per_cluster);
        let centers = shared_centers[group].iter().chain(individual_centers.iter());
        for (c, center) in centers.enumerate() {
            for _ in 0..spec.subpaths_per_cluster {
                let (azimuth, elevation) = match (spec.layout, &grid) {
                    (AngleLayout::OnGrid { .. }, _) => (center.azimuth, center.elevation),
                    (AngleLayout::OffGrid { .. }, Some(g)) => {
                        let h = g.interval / 2.0;
                        (center.azimuth + rng.random_range(-h..h), center.elevation)
                    }
                    _ => {
                        let az = center.azimuth + spread(&mut rng, half_spread);
                        let el = if planar {
                            (center.elevation + spread(&mut rng, half_spread)).abs().min(FRAC_PI_2)
                        } else {
                            0.0
                        };
                        (az, el)
                    }
                };
                let gain = match spec.gains {
                    GainModel::ComplexGaussian => complex_normal(&mut rng, 1.0),
                    GainModel::UnitModulus => Complex64::from_polar(1.0, rng.random_range(-PI..PI)),
                } * amplitude;
                paths.push(SubPath {
                    azimuth,
                    elevation,
                    gain,
                    cluster: c,
                });
            }
        }
        users.push(UserChannel {
            group,
            individual_centers,
            paths,
        });
    }

    let mut realization = ChannelRealization {
        shared_centers,
        users,
        channels: Vec::new(),
    };
    realization.channels = synthesize_channels(&realization, geometry);
    Ok(realization)
}

fn spread(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// `h_k = Σ_paths ξ a(θ, φ)` for every user.
pub fn synthesize_channels(realization: &ChannelRealization, geometry: &ArrayGeometry) -> Vec<CVec> {
    realization
        .users
        .iter()
        .map(|u| channel_from_paths(&u.paths, geometry))
        .collect()
}

pub fn channel_from_paths(paths: &[SubPath], geometry: &ArrayGeometry) -> CVec {
    let mut h = CVec::zeros(geometry.n_antennas());
    for p in paths {
        h.axpy(p.gain, &steering(geometry, p.azimuth, p.elevation), Complex64::new(1.0, 0.0));
    }
    h
}

/// Random complex Gaussian pilots rescaled so that `tr(X Xᴴ) = P T N`.
pub fn generate_pilots<R: Rng + ?Sized>(t: usize, n: usize, power: f64, rng: &mut R) -> CMat {
    let mut x = CMat::from_fn(t, n, |_, _| complex_normal(rng, 1.0));
    let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let target = power * (t * n) as f64;
    x *= Complex64::new((target / energy).sqrt(), 0.0);
    x
}

pub fn generate_pilots_seeded(t: usize, n: usize, power: f64, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_PILOTS);
    generate_pilots(t, n, power, &mut rng)
}

/// Noise variance `P / 10^(snr/10)`; infinite SNR means noiseless.
pub fn noise_variance(power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        power / 10f64.powf(snr_db / 10.0)
    }
}

/// `y = X h + n` with `n ~ CN(0, σ² I)`.
pub fn observe<R: Rng + ?Sized>(pilots: &CMat, h: &CVec, snr_db: f64, power: f64, rng: &mut R) -> Result<(CVec, f64)> {
    if pilots.ncols() != h.len() {
        return Err(Error::shape("observe", pilots.ncols(), h.len()));
    }
    let sigma2 = noise_variance(power, snr_db);
    let mut y = pilots * h;
    if sigma2 > 0.0 {
        for v in y.iter_mut() {
            *v += complex_normal(rng, sigma2);
        }
    }
    Ok((y, sigma2))
}

/// Pilots and received training signals for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub pilots: CMat,
    pub received: Vec<CVec>,
    pub noise_variance: f64,
    pub snr_db: f64,
    pub power: f64,
}

impl ObservationSet {
    pub fn n_users(&self) -> usize {
        self.received.len()
    }

    pub fn n_pilots(&self) -> usize {
        self.pilots.nrows()
    }

    /// Stable FNV-1a digest over every stored number.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for v in self.pilots.iter() {
            feed(v.re);
            feed(v.im);
        }
        for y in &self.received {
            for v in y.iter() {
                feed(v.re);
                feed(v.im);
            }
        }
        feed(self.noise_variance);
        feed(self.snr_db);
        h
    }
}

/// Pilots plus noisy observations of every channel, all drawn from `seed`.
pub fn simulate_observations(channels: &[CVec], n_pilots: usize, snr_db: f64, power: f64, seed: u64) -> Result<ObservationSet> {
    let n = channels.first().map(CVec::len).ok_or_else(|| Error::Config("no channels".into()))?;
    if n_pilots == 0 || !(power > 0.0) {
        return Err(Error::Config("need at least one pilot and positive power".into()));
    }
    let pilots = generate_pilots_seeded(n_pilots, n, power, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_NOISE);
    let mut received = Vec::with_capacity(channels.len());
    let mut sigma2 = noise_variance(power, snr_db);
    for h in channels {
        let (y, s) = observe(&pilots, h, snr_db, power, &mut rng)?;
        sigma2 = s;
        received.push(y);
    }
    Ok(ObservationSet {
        pilots,
        received,
        noise_variance: sigma2,
        snr_db,
        power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_sqr, ONE};

    fn ula() -> ArrayGeometry {
        ArrayGeometry::ula(16, 0.5).unwrap()
    }

    #[test]
    fn shared_only_users_in_a_group_share_centres() {
        let spec = GroupScenario {
            n_groups: 2,
            n_users: 6,
            shared_clusters: 3,
            individual_clusters: 0,
            seed: 7,
            ..Default::default()
        };
        let r = draw_scenario(&spec, &ula()).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let same = r.users[a].group == r.users[b].group;
                let ca = r.user_centers(a);
                let cb = r.user_centers(b);
                assert_eq!(same, ca == cb);
                if !same {
                    assert!(ca.iter().all(|c| !cb.contains(c)));
                }
            }
        }
    }

    #[test]
    fn individual_only_centres_are_independent() {
        let spec = GroupScenario {
            n_groups: 1,
            n_users: 3,
            shared_clusters: 0,
            individual_clusters: 2,
            seed: 11,
            ..Default::default()
        };
        let r = draw_scenario(&spec, &ula()).unwrap();
        assert_ne!(r.user_centers(0), r.user_centers(1));
        assert!(r.user_centers(0).iter().all(|c| !r.user_centers(1).contains(c)));
    }

    #[test]
    fn same_seed_same_realization() {
        let spec = GroupScenario {
            individual_clusters: 1,
            seed: 99,
            ..Default::default()
        };
        let a = draw_scenario(&spec, &ula()).unwrap();
        let b = draw_scenario(&spec, &ula()).unwrap();
        assert_eq!(a, b);
        let c = draw_scenario(&GroupScenario { seed: 100, ..spec }, &ula()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn every_group_is_populated() {
        let spec = GroupScenario {
            n_groups: 4,
            n_users: 9,
            seed: 5,
            ..Default::default()
        };
        let r = draw_scenario(&spec, &ula()).unwrap();
        for g in 0..4 {
            assert!(r.group_labels().contains(&g));
        }
        assert!(draw_scenario(&GroupScenario { n_groups: 10, ..spec }, &ula()).is_err());
    }

    #[test]
    fn stored_channels_are_recomputable() {
        let spec = GroupScenario {
            individual_clusters: 2,
            seed: 3,
            ..Default::default()
        };
        let r = draw_scenario(&spec, &ula()).unwrap();
        assert_eq!(synthesize_channels(&r, &ula()), r.channels);
    }

    #[test]
    fn on_grid_layout_places_paths_on_grid() {
        let g = ula();
        let spec = GroupScenario {
            n_groups: 1,
            n_users: 2,
            shared_clusters: 1,
            individual_clusters: 2,
            subpaths_per_cluster: 1,
            layout: AngleLayout::OnGrid { grid_points: 16 },
            seed: 1,
            ..Default::default()
        };
        let grid = AngleGrid::uniform(&g, 16).unwrap();
        let r = draw_scenario(&spec, &g).unwrap();
        for u in &r.users {
            let mut idx: Vec<usize> = u.paths.iter().map(|p| grid.nearest(p.azimuth)).collect();
            for p in &u.paths {
                assert!(grid.points.contains(&p.azimuth));
            }
            idx.sort();
            idx.dedup();
            assert_eq!(idx.len(), 3);
        }
        let off = draw_scenario(&GroupScenario { layout: AngleLayout::OffGrid { grid_points: 16 }, ..spec }, &g).unwrap();
        for p in off.users.iter().flat_map(|u| &u.paths) {
            let l = grid.nearest(p.azimuth);
            assert!((p.azimuth - grid.points[l]).abs() <= grid.interval / 2.0);
        }
    }

    #[test]
    fn single_path_and_cancellation() {
        let g = ula();
        let one = SubPath { azimuth: 0.0, elevation: 0.0, gain: ONE, cluster: 0 };
        let h = channel_from_paths(&[one], &g);
        assert!(h.iter().all(|v| (v - ONE).norm() < 1e-15));
        let neg = SubPath { gain: -ONE, ..one };
        assert!(channel_from_paths(&[one, neg], &g).norm() < 1e-15);
        let double = SubPath { gain: ONE * 2.0, ..one };
        assert!((channel_from_paths(&[double], &g) - h * Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn channel_energy_matches_array_size_on_average() {
        // N_c = 1, N_s = 20: E‖h‖² = N under the 1/sqrt(N_c N_s) normalisation
        let g = ula();
        let mut total = 0.0;
        let trials = 10_000;
        for seed in 0..trials {
            let spec = GroupScenario {
                n_groups: 1,
                n_users: 1,
                shared_clusters: 1,
                individual_clusters: 0,
                seed,
                ..Default::default()
            };
            let r = draw_scenario(&spec, &g).unwrap();
            total += norm_sqr(&r.channels[0]);
        }
        let mean = total / trials as f64;
        assert!((mean - 16.0).abs() < 0.03 * 16.0, "mean energy {mean}");
    }

    #[test]
    fn pilots_meet_power_constraint() {
        let x = generate_pilots_seeded(7, 5, 2.5, 1);
        let tr: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert!((tr - 2.5 * 35.0).abs() < 1e-12 * tr);
        let one = generate_pilots_seeded(1, 1, 1.0, 4);
        assert!((one[(0, 0)].norm_sqr() - 1.0).abs() < 1e-12);
        let other = generate_pilots_seeded(7, 5, 2.5, 2);
        assert!((x - other).norm() > 0.0);
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let x = generate_pilots_seeded(4, 16, 1.0, 1);
        let h = CVec::from_element(16, ONE);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, s2) = observe(&x, &h, f64::INFINITY, 1.0, &mut rng).unwrap();
        assert_eq!(s2, 0.0);
        assert_eq!(y, &x * &h);
    }

    #[test]
    fn pure_noise_has_the_requested_variance() {
        let t = 10_000;
        let x = generate_pilots_seeded(t, 2, 1.0, 3);
        let h = CVec::zeros(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (y, s2) = observe(&x, &h, 3.0, 1.0, &mut rng).unwrap();
        let var = norm_sqr(&y) / t as f64;
        assert!((var - s2).abs() < 0.05 * s2, "{var} vs {s2}");
        assert!((s2 - 10f64.powf(-0.3)).abs() < 1e-15);
    }

    #[test]
    fn observation_sets_are_reproducible() {
        let r = draw_scenario(&GroupScenario { seed: 4, ..Default::default() }, &ula()).unwrap();
        let a = simulate_observations(&r.channels, 8, 10.0, 1.0, 4).unwrap();
        let b = simulate_observations(&r.channels, 8, 10.0, 1.0, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        let c = simulate_observations(&r.channels, 8, 10.0, 1.0, 5).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn realization_csv_has_one_row_per_path() {
        let spec = GroupScenario { individual_clusters: 1, subpaths_per_cluster: 2, n_users: 3, seed: 2, ..Default::default() };
        let r = draw_scenario(&spec, &ula()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        r.write_csv(&p).unwrap();
        let rows = csv::Reader::from_path(&p).unwrap().records().count();
        assert_eq!(rows, 3 * 4 * 2);
    }
}
