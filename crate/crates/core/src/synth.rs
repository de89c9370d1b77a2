//! Synthetic barrels and bullets with known ground truth.
//!
//! Every barrel owns six random striation signatures (smoothed white noise,
//! unit standard deviation). A bullet fired from the barrel shows them on its
//! lands in a random cyclic order: bullet land `i` carries barrel land
//! `(i + phase) % 6`, read through a window at a random horizontal shift.
//! Scans add a curved land surface, rising groove shoulders and per-cell
//! measurement noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compare::BulletLands;
use crate::scan_io::{default_bullet_id, HeightField, ScanMeta, ScanRecord};
use crate::signal::{Profile, Signal};
use crate::LANDS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub seed: u64,
    pub barrels: usize,
    pub bullets_per_barrel: usize,
    /// Land width in samples.
    pub signal_len: usize,
    /// Standard deviation of the striation signatures, µm.
    pub amplitude: f64,
    /// Measurement noise as a fraction of `amplitude`.
    pub noise: f64,
    /// Gaussian smoothing of the signatures, in samples.
    pub smoothing: f64,
    /// Largest horizontal offset of a land window, in samples.
    pub max_shift: usize,
    pub rows: usize,
    pub x_inc: f64,
    pub y_inc: f64,
    /// Sag of the curved land surface from centre to edge, µm.
    pub curvature: f64,
    /// Groove shoulder width range in samples; `(0, 0)` disables shoulders.
    pub shoulder_width: (usize, usize),
    /// Height of the shoulder step where the groove starts, µm.
    pub shoulder_height: (f64, f64),
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 1,
            barrels: 2,
            bullets_per_barrel: 8,
            signal_len: 2000,
            amplitude: 1.0,
            noise: 0.05,
            smoothing: 3.0,
            max_shift: 100,
            rows: 40,
            x_inc: crate::scan_io::DEFAULT_INCREMENT_UM,
            y_inc: 6.45,
            curvature: 30.0,
            shoulder_width: (40, 150),
            shoulder_height: (15.0, 40.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBullet {
    pub barrel_id: String,
    pub bullet_id: String,
    pub shot_number: u32,
    /// Bullet land `i` (0-based) carries barrel land `(i + phase) % 6`.
    pub phase: usize,
    /// Window offset of each land into its barrel signature.
    pub shifts: [i64; LANDS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStudy {
    pub params: SynthParams,
    pub barrel_ids: Vec<String>,
    /// `signatures[barrel][land]`, length `signal_len + 2 * max_shift`.
    pub signatures: Vec<Vec<Vec<f64>>>,
    pub bullets: Vec<SynthBullet>,
}

/// Deterministic generator for one `(purpose, a, b)` stream.
fn stream(seed: u64, purpose: u64, a: usize, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) ^ ((a as u64) << 24) ^ b as u64);
    rng
}

const SIGNATURE: u64 = 1;
const BULLET: u64 = 2;
const SIGNAL_NOISE: u64 = 3;
const SCAN: u64 = 4;
const GROOVE_FIXTURE: u64 = 5;

/// Unit-variance Gaussian-smoothed white noise.
pub fn striation_signature(rng: &mut impl Rng, len: usize, smoothing: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let half = (4.0 * smoothing).ceil() as usize;
    let raw: Vec<f64> = (0..len + 2 * half).map(|_| normal.sample(rng)).collect();
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let d = k as f64 - half as f64;
            if smoothing > 0.0 {
                (-0.5 * (d / smoothing).powi(2)).exp()
            } else if k == half {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut out: Vec<f64> = (0..len)
        .map(|i| kernel.iter().enumerate().map(|(k, w)| w * raw[i + k]).sum())
        .collect();
    let mean = out.iter().sum::<f64>() / len as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64).sqrt();
    for v in &mut out {
        *v = (*v - mean) / sd;
    }
    out
}

impl SynthStudy {
    pub fn generate(params: &SynthParams) -> Self {
        let sig_len = params.signal_len + 2 * params.max_shift;
        let barrel_ids: Vec<String> = (0..params.barrels).map(barrel_name).collect();
        let signatures = (0..params.barrels)
            .map(|b| {
                (0..LANDS)
                    .map(|l| {
                        let mut rng = stream(params.seed, SIGNATURE, b, l);
                        striation_signature(&mut rng, sig_len, params.smoothing)
                    })
                    .collect()
            })
            .collect();
        let mut bullets = Vec::new();
        for (b, barrel) in barrel_ids.iter().enumerate() {
            for k in 0..params.bullets_per_barrel {
                let mut rng = stream(params.seed, BULLET, b, k);
                let shot = k as u32 + 1;
                let m = params.max_shift as i64;
                bullets.push(SynthBullet {
                    barrel_id: barrel.clone(),
                    bullet_id: default_bullet_id(barrel, shot),
                    shot_number: shot,
                    phase: rng.random_range(0..LANDS),
                    shifts: std::array::from_fn(|_| rng.random_range(-m..=m)),
                });
            }
        }
        Self {
            params: params.clone(),
            barrel_ids,
            signatures,
            bullets,
        }
    }

    fn barrel_index(&self, bullet: &SynthBullet) -> usize {
        self.barrel_ids
            .iter()
            .position(|b| *b == bullet.barrel_id)
            .expect("known barrel")
    }

    /// Clean striation content of one land, `signal_len` samples, in µm.
    pub fn land_truth(&self, bullet: usize, land: usize) -> Vec<f64> {
        let b = &self.bullets[bullet];
        let sig = &self.signatures[self.barrel_index(b)][(land + b.phase) % LANDS];
        let start = (self.params.max_shift as i64 + b.shifts[land]) as usize;
        sig[start..start + self.params.signal_len]
            .iter()
            .map(|v| v * self.params.amplitude)
            .collect()
    }

    /// A ready-made signal: the land's striations plus measurement noise.
    pub fn land_signal(&self, bullet: usize, land: usize) -> Signal {
        let mut rng = stream(self.params.seed, SIGNAL_NOISE, bullet, land);
        let noise = Normal::new(0.0, self.params.noise * self.params.amplitude).unwrap();
        let values = self
            .land_truth(bullet, land)
            .into_iter()
            .map(|v| v + noise.sample(&mut rng))
            .collect();
        Signal::new(values, self.params.x_inc)
    }

    pub fn bullet_lands(&self, bullet: usize) -> BulletLands {
        BulletLands::from_signals(
            self.bullets[bullet].bullet_id.clone(),
            (0..LANDS).map(|l| self.land_signal(bullet, l)).collect(),
        )
    }

    pub fn all_bullet_lands(&self) -> Vec<BulletLands> {
        (0..self.bullets.len())
            .map(|b| self.bullet_lands(b))
            .collect()
    }

    /// Phase at which the land matrix of `(b1, b2)` should peak, or `None`
    /// for bullets from different barrels.
    pub fn planted_phase(&self, b1: usize, b2: usize) -> Option<usize> {
        let (x, y) = (&self.bullets[b1], &self.bullets[b2]);
        (x.barrel_id == y.barrel_id).then(|| (x.phase + LANDS - y.phase) % LANDS)
    }

    /// Full height-field scan of one land, with the true land extent in columns.
    pub fn land_scan(&self, bullet: usize, land: usize) -> (ScanRecord, usize, usize) {
        let p = &self.params;
        let b = &self.bullets[bullet];
        let mut rng = stream(p.seed, SCAN, bullet, land);
        let truth = self.land_truth(bullet, land);
        let (row, left, right) = synth_row_template(&mut rng, &truth, p);
        let noise = Normal::new(0.0, p.noise * p.amplitude).unwrap();
        let n_cols = row.len();
        let mut values = Vec::with_capacity(n_cols * p.rows);
        for _ in 0..p.rows {
            values.extend(row.iter().map(|v| v + noise.sample(&mut rng)));
        }
        let field = HeightField::from_values(n_cols, p.rows, p.x_inc, p.y_inc, values)
            .expect("finite synthetic field");
        let mut meta =
            ScanMeta::with_bullet_id(&b.barrel_id, &b.bullet_id, b.shot_number, land as u8 + 1)
                .expect("land index in range");
        meta.source_path = format!("{}_L{}.x3p", b.bullet_id, land + 1);
        (ScanRecord::new(meta, field), left, right)
    }
}

/// Noise-free crosscut: groove shoulder, curved land carrying `content`,
/// groove shoulder. Returns the heights and the first / last land column.
fn synth_row_template(
    rng: &mut impl Rng,
    content: &[f64],
    p: &SynthParams,
) -> (Vec<f64>, usize, usize) {
    let (lo, hi) = p.shoulder_width;
    let mut width = || {
        if hi == 0 {
            0
        } else {
            rng.random_range(lo..=hi)
        }
    };
    let (wl, wr) = (width(), width());
    let mut step = || rng.random_range(p.shoulder_height.0..=p.shoulder_height.1);
    let (hl, hr) = (step(), step());
    let n = content.len() + wl + wr;
    let centre = (n as f64 - 1.0) / 2.0;
    let row = (0..n)
        .map(|c| {
            let u = (c as f64 - centre) / centre.max(1.0);
            let surface = -p.curvature * u * u;
            if c < wl {
                surface + hl + 0.5 * (wl - c) as f64
            } else if c >= wl + content.len() {
                surface + hr + 0.5 * (c + 1 - wl - content.len()) as f64
            } else {
                surface + content[c - wl]
            }
        })
        .collect();
    (row, wl, wl + content.len() - 1)
}

/// A single crosscut profile with planted shoulders and its true land bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GrooveFixture {
    pub profile: Profile,
    pub left: usize,
    pub right: usize,
}

/// Random profile for groove-detection checks. With `shoulders == false` the
/// whole profile is land.
pub fn groove_fixture(seed: u64, shoulders: bool) -> GrooveFixture {
    let mut p = SynthParams::default();
    if !shoulders {
        p.shoulder_width = (0, 0);
    }
    let mut rng = stream(seed, GROOVE_FIXTURE, 0, 0);
    p.signal_len = rng.random_range(1200..=2200);
    p.curvature = rng.random_range(10.0..60.0);
    let content = striation_signature(&mut rng, p.signal_len, p.smoothing);
    let (row, left, right) = synth_row_template(&mut rng, &content, &p);
    // Band median of five noisy rows leaves roughly 0.55 sigma of noise.
    let noise = Normal::new(0.0, 0.55 * p.noise * p.amplitude).unwrap();
    let heights: Vec<f64> = row.iter().map(|v| v + noise.sample(&mut rng)).collect();
    let mask = vec![true; heights.len()];
    GrooveFixture {
        profile: Profile {
            y_location: 0.0,
            x_inc: p.x_inc,
            heights,
            mask,
        },
        left,
        right,
    }
}

fn barrel_name(i: usize) -> String {
    let letters = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    if i < letters.len() {
        (letters[i] as char).to_string()
    } else {
        format!("R{i}")
    }
}
