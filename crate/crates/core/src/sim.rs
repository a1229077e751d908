//! Synthetic lane simulator.
//!
//! A lane is a 1-D down-track sweep sampled at uniform spacing. Each buried
//! object adds its DSRF response weighted by a Gaussian bump around its
//! position. Magnetic soil patches add a frequency-flat, slowly decaying
//! response (real part linear in `ln w`, constant imaginary part) that the
//! prescreener partly confuses with metal. Complex Gaussian noise is added on
//! top.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsrf::{
    dsrf_atom, dsrf_response, stack_complex, ComplexSpectrum, DsrfParams, FeatureVector,
    FrequencyGrid,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectType {
    #[serde(rename = "HMT")]
    HighMetal,
    #[serde(rename = "LMT")]
    LowMetal,
    #[serde(rename = "NMT")]
    NonMetal,
    #[serde(rename = "CL")]
    Clutter,
}

impl ObjectType {
    pub const ALL: [ObjectType; 4] = [
        ObjectType::HighMetal,
        ObjectType::LowMetal,
        ObjectType::NonMetal,
        ObjectType::Clutter,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ObjectType::HighMetal => "HMT",
            ObjectType::LowMetal => "LMT",
            ObjectType::NonMetal => "NMT",
            ObjectType::Clutter => "CL",
        }
    }

    pub fn is_target(self) -> bool {
        self != ObjectType::Clutter
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ObjectType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectType::ALL
            .into_iter()
            .find(|t| t.code() == s)
            .ok_or_else(|| Error::invalid(format!("unknown object type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub lane_id: u32,
    pub position_m: f64,
    pub object_type: ObjectType,
}

/// Uniformly sampled sweep of complex spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub lane_id: u32,
    pub grid: FrequencyGrid,
    pub positions: Vec<f64>,
    pub spectra: Vec<ComplexSpectrum>,
}

impl Lane {
    pub fn new(
        lane_id: u32,
        grid: FrequencyGrid,
        positions: Vec<f64>,
        spectra: Vec<ComplexSpectrum>,
    ) -> Result<Self> {
        if positions.len() != spectra.len() {
            return Err(Error::invalid("one spectrum per position required"));
        }
        if positions.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("lane positions must be strictly increasing"));
        }
        if positions.len() > 2 {
            let step = positions[1] - positions[0];
            if positions
                .windows(2)
                .any(|p| (p[1] - p[0] - step).abs() > 1e-9)
            {
                return Err(Error::invalid("lane positions must be uniformly spaced"));
            }
        }
        if let Some(s) = spectra.iter().find(|s| s.len() != grid.len()) {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: s.len(),
            });
        }
        Ok(Self {
            lane_id,
            grid,
            positions,
            spectra,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> Option<f64> {
        (self.len() > 1).then(|| self.positions[1] - self.positions[0])
    }

    pub fn feature(&self, i: usize) -> FeatureVector {
        stack_complex(&self.spectra[i])
    }
}

/// One buried object of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub object_type: ObjectType,
    pub position_m: f64,
    pub sigma_m: f64,
    pub params: DsrfParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    pub lane_id: u32,
    pub length_m: f64,
    pub objects: Vec<ObjectSpec>,
}

/// Complete, explicit description of a synthetic collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    /// Transmit frequencies, rad/s.
    pub omegas: Vec<f64>,
    pub sample_spacing_m: f64,
    /// Standard deviation of each real and imaginary noise component.
    pub noise_std: f64,
    /// Mean amplitude of the lane-wide ground response.
    pub drift_amplitude: f64,
    /// Relative along-track swing of the ground response.
    pub drift_variation: f64,
    pub drift_wavelength_min_m: f64,
    pub drift_wavelength_max_m: f64,
    /// Peak amplitude scale of localized magnetic soil patches.
    pub soil_amplitude: f64,
    pub soil_patches_per_m: f64,
    pub soil_sigma_min_m: f64,
    pub soil_sigma_max_m: f64,
    /// Small unlisted metal fragments: single relaxations with
    /// log-uniform relaxation frequency in `[debris_zeta_min, debris_zeta_max]`.
    pub debris_per_m: f64,
    pub debris_amplitude_min: f64,
    pub debris_amplitude_max: f64,
    pub debris_sigma_m: f64,
    pub debris_zeta_min: f64,
    pub debris_zeta_max: f64,
    pub lanes: Vec<LaneSpec>,
}

impl SceneConfig {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.omegas.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.lanes.is_empty() {
            return Err(Error::invalid("scene has no lanes"));
        }
        let positive = [
            ("sample_spacing_m", self.sample_spacing_m),
            ("soil_sigma_min_m", self.soil_sigma_min_m),
            ("soil_sigma_max_m", self.soil_sigma_max_m),
            ("drift_wavelength_min_m", self.drift_wavelength_min_m),
            ("drift_wavelength_max_m", self.drift_wavelength_max_m),
            ("debris_sigma_m", self.debris_sigma_m),
            ("debris_zeta_min", self.debris_zeta_min),
            ("debris_zeta_max", self.debris_zeta_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0")));
            }
        }
        if self.soil_sigma_max_m < self.soil_sigma_min_m {
            return Err(Error::invalid("soil sigma range is reversed"));
        }
        if self.debris_amplitude_max < self.debris_amplitude_min {
            return Err(Error::invalid("debris amplitude range is reversed"));
        }
        if self.debris_zeta_max < self.debris_zeta_min {
            return Err(Error::invalid("debris relaxation range is reversed"));
        }
        if self.drift_wavelength_max_m < self.drift_wavelength_min_m {
            return Err(Error::invalid("drift wavelength range is reversed"));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("drift_amplitude", self.drift_amplitude),
            ("drift_variation", self.drift_variation),
            ("soil_amplitude", self.soil_amplitude),
            ("soil_patches_per_m", self.soil_patches_per_m),
            ("debris_per_m", self.debris_per_m),
            ("debris_amplitude_min", self.debris_amplitude_min),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        let mut ids: Vec<u32> = self.lanes.iter().map(|l| l.lane_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::invalid("duplicate lane id"));
        }
        for lane in &self.lanes {
            if !(lane.length_m > self.sample_spacing_m) {
                return Err(Error::invalid(format!(
                    "lane {} is shorter than one sample spacing",
                    lane.lane_id
                )));
            }
            for o in &lane.objects {
                if !(o.sigma_m > 0.0) {
                    return Err(Error::invalid("object extent sigma_m must be > 0"));
                }
                o.params.validate()?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::format(line, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Soil response shape: real part falling linearly in `ln w`, flat
/// imaginary part, scaled to unit norm.
pub fn soil_spectrum(grid: &FrequencyGrid, slope: f64) -> ComplexSpectrum {
    let w_ref = (grid.min_omega() * grid.max_omega()).sqrt();
    let values: Vec<Complex64> = grid
        .omegas()
        .iter()
        .map(|&w| {
            Complex64::new(
                1.0 - slope * (w / w_ref).ln(),
                -std::f64::consts::FRAC_PI_2 * slope,
            )
        })
        .collect();
    let n = values.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    ComplexSpectrum {
        values: values.into_iter().map(|c| c / n).collect(),
    }
}

const DRIFT_COMPONENTS: usize = 3;

struct SoilPatch {
    position_m: f64,
    sigma_m: f64,
    response: ComplexSpectrum,
}

fn lane_rng(seed: u64, lane_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(lane_id));
    rng
}

fn gaussian_gain(p: f64, center: f64, sigma: f64) -> f64 {
    let d = p - center;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Simulate lane `lane_index` of `scene`; deterministic given the seed.
pub fn simulate_lane(
    scene: &SceneConfig,
    lane_index: usize,
) -> Result<(Lane, Vec<GroundTruthObject>)> {
    scene.validate()?;
    let spec = scene
        .lanes
        .get(lane_index)
        .ok_or_else(|| Error::invalid(format!("no lane at index {lane_index}")))?;
    let grid = scene.grid()?;
    let n = grid.len();
    let mut rng = lane_rng(scene.seed, spec.lane_id);

    let patch_count = (scene.soil_patches_per_m * spec.length_m).round() as usize;
    let patches: Vec<SoilPatch> = (0..patch_count)
        .map(|_| {
            let position_m = rng.random_range(0.0..spec.length_m);
            let sigma_m = rng.random_range(scene.soil_sigma_min_m..=scene.soil_sigma_max_m);
            let amp = scene.soil_amplitude * rng.random_range(0.5..1.5);
            let slope = rng.random_range(0.05..0.25);
            let mut response = soil_spectrum(&grid, slope);
            for v in &mut response.values {
                *v *= amp;
            }
            SoilPatch {
                position_m,
                sigma_m,
                response,
            }
        })
        .collect();

    let debris_count = (scene.debris_per_m * spec.length_m).round() as usize;
    let debris: Vec<SoilPatch> = (0..debris_count)
        .map(|_| {
            let position_m = rng.random_range(0.0..spec.length_m);
            let amp = rng.random_range(scene.debris_amplitude_min..=scene.debris_amplitude_max);
            let zeta = log_uniform(&mut rng, scene.debris_zeta_min, scene.debris_zeta_max);
            let mut response = dsrf_atom(&grid, zeta)?;
            for v in &mut response.values {
                *v *= amp;
            }
            Ok(SoilPatch {
                position_m,
                sigma_m: scene.debris_sigma_m,
                response,
            })
        })
        .collect::<Result<_>>()?;

    // lane-wide ground: one soil shape whose strength wanders slowly
    let ground = soil_spectrum(&grid, rng.random_range(0.05..0.25));
    let swings: Vec<(f64, f64, f64)> = (0..DRIFT_COMPONENTS)
        .map(|_| {
            let amp = scene.drift_variation / DRIFT_COMPONENTS as f64 * rng.random_range(0.5..1.5);
            let wavelength =
                rng.random_range(scene.drift_wavelength_min_m..=scene.drift_wavelength_max_m);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (amp, wavelength, phase)
        })
        .collect();

    let responses = spec
        .objects
        .iter()
        .map(|o| dsrf_response(&grid, &o.params))
        .collect::<Result<Vec<_>>>()?;

    let noise = Normal::new(0.0, scene.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let count = (spec.length_m / scene.sample_spacing_m).floor() as usize + 1;
    let mut positions = Vec::with_capacity(count);
    let mut spectra = Vec::with_capacity(count);
    for i in 0..count {
        let p = i as f64 * scene.sample_spacing_m;
        let mut values = vec![Complex64::new(0.0, 0.0); n];
        for (o, h) in spec.objects.iter().zip(&responses) {
            if o.object_type == ObjectType::NonMetal {
                continue;
            }
            let g = gaussian_gain(p, o.position_m, o.sigma_m);
            for (v, r) in values.iter_mut().zip(&h.values) {
                *v += r * g;
            }
        }
        if scene.drift_amplitude > 0.0 {
            let swing: f64 = swings
                .iter()
                .map(|(a, wl, ph)| a * (std::f64::consts::TAU * p / wl + ph).sin())
                .sum();
            let g = scene.drift_amplitude * (1.0 + swing);
            for (v, r) in values.iter_mut().zip(&ground.values) {
                *v += r * g;
            }
        }
        for patch in patches.iter().chain(&debris) {
            let g = gaussian_gain(p, patch.position_m, patch.sigma_m);
            for (v, r) in values.iter_mut().zip(&patch.response.values) {
                *v += r * g;
            }
        }
        if scene.noise_std > 0.0 {
            for v in values.iter_mut() {
                *v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
        }
        positions.push(p);
        spectra.push(ComplexSpectrum { values });
    }
    let truth = spec
        .objects
        .iter()
        .map(|o| GroundTruthObject {
            lane_id: spec.lane_id,
            position_m: o.position_m,
            object_type: o.object_type,
        })
        .collect();
    Ok((Lane::new(spec.lane_id, grid, positions, spectra)?, truth))
}

/// Simulate every lane; ground truth is concatenated in lane order.
pub fn simulate_scene(scene: &SceneConfig) -> Result<(Vec<Lane>, Vec<GroundTruthObject>)> {
    let mut lanes = Vec::with_capacity(scene.lanes.len());
    let mut truth = Vec::new();
    for i in 0..scene.lanes.len() {
        let (lane, gt) = simulate_lane(scene, i)?;
        lanes.push(lane);
        truth.extend(gt);
    }
    Ok((lanes, truth))
}

/// Object counts per lane: high-metal, low-metal, non-metal, clutter.
pub type LaneCounts = [usize; 4];

/// Object inventory of the six measured lanes.
pub const SIX_LANE_COUNTS: [LaneCounts; 6] = [
    [4, 7, 0, 6],
    [4, 10, 0, 4],
    [4, 7, 0, 8],
    [6, 6, 3, 0],
    [7, 5, 5, 0],
    [6, 6, 2, 3],
];

/// Knobs for turning object counts into an explicit [`SceneConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub lanes: Vec<LaneCounts>,
    pub grid: FrequencyGrid,
    pub sample_spacing_m: f64,
    /// Down-track room reserved per object.
    pub slot_m: f64,
    pub margin_m: f64,
    pub object_sigma_m: f64,
    /// Clutter is often spread-out debris, so it gets its own extent.
    pub clutter_sigma_m: f64,
    pub noise_std: f64,
    pub drift_amplitude: f64,
    pub drift_variation: f64,
    pub drift_wavelength_min_m: f64,
    pub drift_wavelength_max_m: f64,
    pub soil_amplitude: f64,
    pub soil_patches_per_m: f64,
    pub soil_sigma_min_m: f64,
    pub soil_sigma_max_m: f64,
    pub debris_per_m: f64,
    pub debris_amplitude: (f64, f64),
    pub debris_sigma_m: f64,
    /// Debris relaxation range as multiples of the top grid frequency.
    pub debris_zeta_rel: (f64, f64),
    /// Amplitude ranges (log-uniform) per object class.
    pub hmt_amplitude: (f64, f64),
    pub lmt_amplitude: (f64, f64),
    pub clutter_amplitude: (f64, f64),
}

impl Default for ScenePlan {
    fn default() -> Self {
        Self {
            lanes: SIX_LANE_COUNTS.to_vec(),
            grid: FrequencyGrid::default_wideband(),
            sample_spacing_m: 0.03,
            slot_m: 12.0,
            margin_m: 3.0,
            object_sigma_m: 0.08,
            clutter_sigma_m: 0.08,
            noise_std: 0.005,
            drift_amplitude: 0.0,
            drift_variation: 0.3,
            drift_wavelength_min_m: 2.0,
            drift_wavelength_max_m: 12.0,
            soil_amplitude: 1.0,
            soil_patches_per_m: 0.2,
            soil_sigma_min_m: 0.12,
            soil_sigma_max_m: 0.3,
            debris_per_m: 0.08,
            debris_amplitude: (0.2, 0.6),
            debris_sigma_m: 0.05,
            debris_zeta_rel: (1.0, 4.0),
            hmt_amplitude: (1.5, 4.0),
            lmt_amplitude: (0.3, 0.9),
            clutter_amplitude: (0.3, 1.5),
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

impl ScenePlan {
    /// Plan with an inventory dominated by low-metal targets.
    pub fn lmt_dominant() -> Self {
        Self {
            lanes: vec![[2, 12, 1, 1], [1, 13, 1, 2], [2, 12, 0, 1], [1, 14, 1, 0]],
            ..Self::default()
        }
    }

    pub fn build(&self, seed: u64) -> SceneConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let (wlo, whi) = (self.grid.min_omega(), self.grid.max_omega());
        let lanes = self
            .lanes
            .iter()
            .enumerate()
            .map(|(i, counts)| {
                let mut kinds: Vec<ObjectType> = counts
                    .iter()
                    .zip(ObjectType::ALL)
                    .flat_map(|(&c, t)| std::iter::repeat_n(t, c))
                    .collect();
                kinds.shuffle(&mut rng);
                let length_m = 2.0 * self.margin_m + kinds.len() as f64 * self.slot_m;
                let objects = kinds
                    .into_iter()
                    .enumerate()
                    .map(|(slot, object_type)| {
                        let center = self.margin_m + (slot as f64 + 0.5) * self.slot_m;
                        let jitter = rng.random_range(-0.25..=0.25) * self.slot_m;
                        let params = match object_type {
                            ObjectType::HighMetal => {
                                let amp = log_uniform(
                                    &mut rng,
                                    self.hmt_amplitude.0,
                                    self.hmt_amplitude.1,
                                );
                                let z1 = log_uniform(&mut rng, 2.0 * wlo, whi / 8.0);
                                let z2 = z1 * log_uniform(&mut rng, 1.5, 4.0);
                                let split = rng.random_range(0.6..0.9);
                                DsrfParams {
                                    c0: 0.0,
                                    cks: vec![amp * split, amp * (1.0 - split)],
                                    zetas: vec![z1, z2],
                                }
                            }
                            ObjectType::LowMetal => {
                                let amp = log_uniform(
                                    &mut rng,
                                    self.lmt_amplitude.0,
                                    self.lmt_amplitude.1,
                                );
                                DsrfParams {
                                    c0: 0.0,
                                    cks: vec![amp],
                                    zetas: vec![log_uniform(&mut rng, 6.0 * wlo, whi / 2.0)],
                                }
                            }
                            ObjectType::Clutter => {
                                let amp = log_uniform(
                                    &mut rng,
                                    self.clutter_amplitude.0,
                                    self.clutter_amplitude.1,
                                );
                                DsrfParams {
                                    c0: 0.0,
                                    cks: vec![amp],
                                    zetas: vec![log_uniform(&mut rng, wlo, 2.0 * whi)],
                                }
                            }
                            ObjectType::NonMetal => DsrfParams::silent(),
                        };
                        ObjectSpec {
                            object_type,
                            position_m: center + jitter,
                            sigma_m: if object_type == ObjectType::Clutter {
                                self.clutter_sigma_m
                            } else {
                                self.object_sigma_m
                            },
                            params,
                        }
                    })
                    .collect();
                LaneSpec {
                    lane_id: i as u32 + 1,
                    length_m,
                    objects,
                }
            })
            .collect();
        SceneConfig {
            seed,
            omegas: self.grid.omegas().to_vec(),
            sample_spacing_m: self.sample_spacing_m,
            noise_std: self.noise_std,
            drift_amplitude: self.drift_amplitude,
            drift_variation: self.drift_variation,
            drift_wavelength_min_m: self.drift_wavelength_min_m,
            drift_wavelength_max_m: self.drift_wavelength_max_m,
            soil_amplitude: self.soil_amplitude,
            soil_patches_per_m: self.soil_patches_per_m,
            soil_sigma_min_m: self.soil_sigma_min_m,
            soil_sigma_max_m: self.soil_sigma_max_m,
            debris_per_m: self.debris_per_m,
            debris_amplitude_min: self.debris_amplitude.0,
            debris_amplitude_max: self.debris_amplitude.1,
            debris_sigma_m: self.debris_sigma_m,
            debris_zeta_min: self.debris_zeta_rel.0 * whi,
            debris_zeta_max: self.debris_zeta_rel.1 * whi,
            lanes,
        }
    }
}

/// The default six-lane scene.
pub fn default_scene(seed: u64) -> SceneConfig {
    ScenePlan::default().build(seed)
}
