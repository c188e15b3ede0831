//! Synthetic reflection mixtures `M = γ₁T + γ₂R − γ₁γ₂·T⊙R` with per-channel
//! coefficients, and seeded batch generation with a replayable manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::io::{encode_png, read_png, BitDepth};
use crate::image::{resize_bilinear, ImageF};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Per-channel blending coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTriple {
    pub gamma1: [f64; 3],
    pub gamma2: [f64; 3],
}

impl GammaTriple {
    pub fn new(gamma1: [f64; 3], gamma2: [f64; 3]) -> Result<Self> {
        let g = Self { gamma1, gamma2 };
        if g.gamma1.iter().chain(&g.gamma2).all(|v| (0.0..=1.0).contains(v)) {
            Ok(g)
        } else {
            Err(Error::invalid(format!("blend coefficients outside [0, 1]: {g:?}")))
        }
    }

    pub fn uniform(g1: f64, g2: f64) -> Result<Self> {
        Self::new([g1; 3], [g2; 3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub gamma1_range: [f64; 2],
    pub gamma2_range: [f64; 2],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            gamma1_range: [0.8, 1.0],
            gamma2_range: [0.2, 0.6],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("gamma1", self.gamma1_range), ("gamma2", self.gamma2_range)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::invalid(format!(
                    "{name} range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1"
                )));
            }
        }
        Ok(())
    }
}

/// Random stream for sample `index`; independent of the order samples are drawn in.
fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn draw_gammas(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> GammaTriple {
    let mut g = GammaTriple {
        gamma1: [0.0; 3],
        gamma2: [0.0; 3],
    };
    for v in g.gamma1.iter_mut() {
        *v = draw(rng, cfg.gamma1_range);
    }
    for v in g.gamma2.iter_mut() {
        *v = draw(rng, cfg.gamma2_range);
    }
    g
}

/// Six independent uniform draws for sample `index` under `cfg.seed`.
pub fn sample_gammas(cfg: &SynthConfig, index: u64) -> Result<GammaTriple> {
    cfg.validate()?;
    Ok(draw_gammas(cfg, &mut sample_rng(cfg.seed, index)))
}

#[inline]
fn mix(t: f64, r: f64, g1: f64, g2: f64) -> f64 {
    g1 * t + g2 * r - g1 * g2 * t * r
}

pub fn blend(t: &ImageF, r: &ImageF, g: &GammaTriple) -> Result<ImageF> {
    if t.channels() != 3 {
        return Err(Error::invalid(format!(
            "blending needs 3-channel images, got {}",
            t.channels()
        )));
    }
    if !t.same_shape(r) {
        return Err(Error::invalid(format!(
            "transmission {}x{}x{} and reflection {}x{}x{} differ in shape",
            t.height(),
            t.width(),
            t.channels(),
            r.height(),
            r.width(),
            r.channels()
        )));
    }
    let data = t
        .data()
        .chunks_exact(3)
        .zip(r.data().chunks_exact(3))
        .flat_map(|(tp, rp)| {
            (0..3).map(move |c| mix(tp[c], rp[c], g.gamma1[c], g.gamma2[c]).clamp(0.0, 1.0))
        })
        .collect();
    ImageF::new(t.height(), t.width(), 3, data)
}

/// One line of the batch manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: u64,
    pub t_path: PathBuf,
    pub r_path: PathBuf,
    pub out_path: Option<PathBuf>,
    pub gamma1: [f64; 3],
    pub gamma2: [f64; 3],
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl ManifestRecord {
    pub fn gammas(&self) -> GammaTriple {
        GammaTriple {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
        }
    }
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no PNG files in {}", dir.display())));
    }
    Ok(files)
}

fn as_rgb(img: ImageF) -> Result<ImageF> {
    if img.channels() == 3 {
        return Ok(img);
    }
    let plane = img.channel(0);
    ImageF::from_channels(&[plane.clone(), plane.clone(), plane])
}

/// Loads the pair named by a record and recomputes its mixture.
pub fn replay(record: &ManifestRecord) -> Result<ImageF> {
    let t = as_rgb(read_png(&record.t_path)?)?;
    let r = as_rgb(read_png(&record.r_path)?)?;
    let r = if r.height() != t.height() || r.width() != t.width() {
        r.map_planes(|p| resize_bilinear(p, t.height(), t.width()))?
    } else {
        r
    };
    blend(&t, &r, &GammaTriple::new(record.gamma1, record.gamma2)?)
}

pub fn mixture_file_name(index: u64) -> String {
    format!("mix_{index:05}.png")
}

/// Writes `count` mixtures and `manifest.jsonl` into `out_dir`.
///
/// Sample `i` draws its coefficients and its source pair from the stream
/// `(seed, i)`. Unreadable sources are skipped and recorded as such.
pub fn synth_batch(
    t_dir: &Path,
    r_dir: &Path,
    out_dir: &Path,
    count: usize,
    cfg: &SynthConfig,
) -> Result<Vec<ManifestRecord>> {
    cfg.validate()?;
    if count < 1 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let t_files = list_pngs(t_dir)?;
    let r_files = list_pngs(r_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let records = (0..count as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = sample_rng(cfg.seed, index);
            let g = draw_gammas(cfg, &mut rng);
            let t_path = t_files[rng.random_range(0..t_files.len() as u64) as usize].clone();
            let r_path = r_files[rng.random_range(0..r_files.len() as u64) as usize].clone();
            let mut rec = ManifestRecord {
                index,
                t_path,
                r_path,
                out_path: None,
                gamma1: g.gamma1,
                gamma2: g.gamma2,
                seed: cfg.seed,
                skipped: None,
            };
            match replay(&rec) {
                Ok(mixture) => {
                    let out = out_dir.join(mixture_file_name(index));
                    let bytes = encode_png(&mixture, BitDepth::Eight)?;
                    fs::write(&out, bytes).map_err(|e| Error::io(&out, e))?;
                    rec.out_path = Some(out);
                }
                Err(e @ (Error::Io { .. } | Error::Codec { .. } | Error::InvalidInput(_))) => {
                    log::warn!("sample {index}: skipped: {e}");
                    rec.skipped = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = out_dir.join(MANIFEST_NAME);
    let mut f = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    for rec in &records {
        let line = serde_json::to_string(rec).expect("manifest records serialize");
        writeln!(f, "{line}").map_err(|e| Error::io(&manifest, e))?;
    }
    Ok(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| Error::invalid(format!("{}: bad manifest line: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(h: usize, w: usize, k: usize) -> ImageF {
        ImageF::from_fn(h, w, 3, |y, x, c| ((y * 7 + x * 13 + c * 5 + k) % 23) as f64 / 22.0).unwrap()
    }

    #[test]
    fn reflection_off_returns_transmission() {
        let t = pattern(5, 6, 0);
        let r = pattern(5, 6, 9);
        let g = GammaTriple::uniform(1.0, 0.0).unwrap();
        assert_eq!(blend(&t, &r, &g).unwrap(), t);
    }

    #[test]
    fn saturated_inputs_stay_at_one() {
        let ones = ImageF::filled(3, 3, 3, 1.0).unwrap();
        let g = GammaTriple::uniform(1.0, 1.0).unwrap();
        assert!(blend(&ones, &ones, &g).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gamma2_zero_scales_transmission() {
        let t = pattern(4, 4, 1);
        let r = pattern(4, 4, 2);
        let g = GammaTriple::new([0.9, 0.5, 0.3], [0.0; 3]).unwrap();
        let m = blend(&t, &r, &g).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                for c in 0..3 {
                    assert_eq!(m.get(y, x, c), g.gamma1[c] * t.get(y, x, c));
                }
            }
        }
    }

    #[test]
    fn cross_term_never_adds() {
        let t = pattern(6, 6, 3);
        let r = pattern(6, 6, 4);
        let g = GammaTriple::new([0.8, 0.9, 1.0], [0.6, 0.3, 1.0]).unwrap();
        for (tv, rv) in t.data().iter().zip(r.data()) {
            for c in 0..3 {
                let m = mix(*tv, *rv, g.gamma1[c], g.gamma2[c]);
                assert!(m <= g.gamma1[c] * tv + g.gamma2[c] * rv);
                assert!(m <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn blend_rejects_mismatch() {
        let g = GammaTriple::uniform(1.0, 0.5).unwrap();
        assert!(blend(&pattern(4, 4, 0), &pattern(4, 5, 0), &g).is_err());
        let gray = ImageF::filled(4, 4, 1, 0.5).unwrap();
        assert!(blend(&gray, &gray, &g).is_err());
        assert!(GammaTriple::uniform(1.1, 0.5).is_err());
    }

    #[test]
    fn point_range_and_determinism() {
        let cfg = SynthConfig {
            gamma1_range: [0.5, 0.5],
            gamma2_range: [0.5, 0.5],
            seed: 3,
        };
        let g = sample_gammas(&cfg, 17).unwrap();
        assert_eq!(g, GammaTriple::uniform(0.5, 0.5).unwrap());
        let cfg = SynthConfig::default();
        assert_eq!(sample_gammas(&cfg, 4).unwrap(), sample_gammas(&cfg, 4).unwrap());
        assert_ne!(sample_gammas(&cfg, 4).unwrap(), sample_gammas(&cfg, 5).unwrap());
    }

    #[test]
    fn uniform_draw_mean() {
        let cfg = SynthConfig {
            gamma1_range: [0.2, 0.6],
            gamma2_range: [0.2, 0.6],
            seed: 99,
        };
        let n = 10_000;
        let mean = (0..n)
            .map(|i| sample_gammas(&cfg, i).unwrap().gamma1[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.4).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn bad_ranges_are_rejected() {
        let cfg = SynthConfig {
            gamma1_range: [0.7, 0.6],
            ..SynthConfig::default()
        };
        assert!(sample_gammas(&cfg, 0).is_err());
    }
}
