//! Spatial gate from the two priors and gated modulation of multi-scale
//! conditioning residuals.
//!
//! The gate is `g = 1 + β·(P_int ⊙ P_hf)`. Each conditioning level is scaled
//! elementwise by the gate resized to that level and clipped to `[1, 1 + β_max]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, ScalarMap};

pub const FSTK_MAGIC: &[u8; 4] = b"FSTK";

/// Upper modulation strength used at the end of the warmup ramp.
pub const DEFAULT_BETA_MAX: f64 = 0.25;
/// Fraction of training progress during which the gate stays off.
pub const DEFAULT_WARMUP_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub beta_max: f64,
    pub warmup_ratio: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            beta_max: DEFAULT_BETA_MAX,
            warmup_ratio: DEFAULT_WARMUP_RATIO,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_max > 0.0) || !self.beta_max.is_finite() {
            return Err(Error::invalid(format!("beta_max must be positive, got {}", self.beta_max)));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::invalid(format!(
                "warmup ratio must lie in [0, 1), got {}",
                self.warmup_ratio
            )));
        }
        Ok(())
    }
}

/// `g = 1 + β·(P_int ⊙ P_hf)`; both priors must lie in `[0, 1]`.
pub fn gate_map(p_int: &ScalarMap, p_hf: &ScalarMap, beta: f64) -> Result<ScalarMap> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be >= 0, got {beta}")));
    }
    for (name, map) in [("intensity", p_int), ("high-frequency", p_hf)] {
        if map.min() < 0.0 || map.max() > 1.0 {
            return Err(Error::invalid(format!(
                "{name} prior leaves [0, 1]: range [{}, {}]",
                map.min(),
                map.max()
            )));
        }
    }
    p_int.zip_with(p_hf, |a, b| 1.0 + beta * (a * b))
}

/// Zero during warmup, then a linear ramp reaching `β_max` at `u = 1`.
pub fn beta_schedule(progress: f64, cfg: &GateConfig) -> Result<f64> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::invalid(format!("progress must lie in [0, 1], got {progress}")));
    }
    let ramp = ((progress - cfg.warmup_ratio) / (1.0 - cfg.warmup_ratio)).clamp(0.0, 1.0);
    Ok(cfg.beta_max * ramp)
}

/// One conditioning tensor, `height × width × channels`, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureLevel {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "feature level {height}x{width}x{channels} is empty"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "feature level holds {} samples, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature level contains non-finite samples"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Ordered multi-resolution conditioning residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    levels: Vec<FeatureLevel>,
}

impl FeatureStack {
    pub fn new(levels: Vec<FeatureLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("feature stack has no levels"));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[FeatureLevel] {
        &self.levels
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FSTK_MAGIC);
        out.extend_from_slice(&(self.levels.len() as u32).to_le_bytes());
        for level in &self.levels {
            for dim in [level.height, level.width, level.channels] {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for v in &level.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Reader { bytes, pos: 0 };
        if cur.take(4)? != FSTK_MAGIC {
            return Err(Error::invalid("not an FSTK stream"));
        }
        let count = cur.u32()? as usize;
        let mut levels = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let (h, w, c) = (cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize);
            let n = h
                .checked_mul(w)
                .and_then(|v| v.checked_mul(c))
                .ok_or_else(|| Error::invalid("FSTK level dimensions overflow"))?;
            let raw = cur.take(n.checked_mul(4).ok_or_else(|| Error::invalid("FSTK level too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            levels.push(FeatureLevel::new(h, w, c, data)?);
        }
        if cur.pos != bytes.len() {
            return Err(Error::invalid("trailing bytes after FSTK levels"));
        }
        Self::new(levels)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::invalid("truncated FSTK stream"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Gate resized to each level's resolution and clipped to `[1, 1 + β_max]`.
pub fn level_gates(stack: &FeatureStack, g: &ScalarMap, beta_max: f64) -> Result<Vec<ScalarMap>> {
    if !(beta_max > 0.0) || !beta_max.is_finite() {
        return Err(Error::invalid(format!("beta_max must be positive, got {beta_max}")));
    }
    stack
        .levels
        .iter()
        .map(|level| {
            resize_bilinear(g, level.height, level.width)?.map(|v| v.clamp(1.0, 1.0 + beta_max))
        })
        .collect()
}

pub fn modulate_stack(stack: &FeatureStack, g: &ScalarMap, beta_max: f64) -> Result<FeatureStack> {
    let gates = level_gates(stack, g, beta_max)?;
    let levels = stack
        .levels
        .iter()
        .zip(&gates)
        .map(|(level, gate)| {
            let data = level
                .data
                .chunks_exact(level.channels)
                .zip(gate.data())
                .flat_map(|(px, &factor)| {
                    debug_assert!((1.0..=1.0 + beta_max).contains(&factor));
                    px.iter().map(move |&v| (f64::from(v) * factor) as f32)
                })
                .collect();
            FeatureLevel::new(level.height, level.width, level.channels, data)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureStack::new(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack() -> FeatureStack {
        let mk = |h, w, c, seed: u32| {
            let data = (0..h * w * c)
                .map(|i| ((i as u32).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f32 / 250.0 - 2.0)
                .collect();
            FeatureLevel::new(h, w, c, data).unwrap()
        };
        FeatureStack::new(vec![mk(8, 8, 4, 1), mk(4, 4, 8, 2), mk(2, 2, 16, 3)]).unwrap()
    }

    #[test]
    fn gate_examples() {
        let p = ScalarMap::filled(3, 3, 0.7).unwrap();
        let q = ScalarMap::filled(3, 3, 0.2).unwrap();
        assert!(gate_map(&p, &q, 0.0).unwrap().data().iter().all(|&v| v == 1.0));
        let ones = ScalarMap::filled(3, 3, 1.0).unwrap();
        assert!(gate_map(&ones, &ones, 0.25).unwrap().data().iter().all(|&v| v == 1.25));
        let half = ScalarMap::filled(3, 3, 0.5).unwrap();
        assert!(gate_map(&half, &half, 0.2)
            .unwrap()
            .data()
            .iter()
            .all(|&v| (v - 1.05).abs() < 1e-15));
    }

    #[test]
    fn gate_rejects_bad_priors() {
        let ok = ScalarMap::filled(2, 2, 0.5).unwrap();
        let big = ScalarMap::filled(2, 2, 1.5).unwrap();
        let other = ScalarMap::filled(2, 3, 0.5).unwrap();
        assert!(gate_map(&ok, &big, 0.1).is_err());
        assert!(gate_map(&ok, &other, 0.1).is_err());
        assert!(gate_map(&ok, &ok, -0.1).is_err());
    }

    #[test]
    fn schedule_examples() {
        let cfg = GateConfig::default();
        assert_eq!(beta_schedule(0.05, &cfg).unwrap(), 0.0);
        assert_eq!(beta_schedule(1.0, &cfg).unwrap(), 0.25);
        assert!((beta_schedule(0.55, &cfg).unwrap() - 0.125).abs() < 1e-12);
        assert!(beta_schedule(1.1, &cfg).is_err());
        assert!(beta_schedule(-0.1, &cfg).is_err());
    }

    #[test]
    fn identity_gate_is_bitwise_noop() {
        let s = stack();
        let g = ScalarMap::filled(16, 16, 1.0).unwrap();
        assert_eq!(modulate_stack(&s, &g, 0.25).unwrap(), s);
    }

    #[test]
    fn large_gate_is_clipped() {
        let s = stack();
        let g = ScalarMap::filled(5, 7, 2.0).unwrap();
        let out = modulate_stack(&s, &g, 0.25).unwrap();
        for (a, b) in out.levels().iter().zip(s.levels()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, *y * 1.25);
            }
        }
    }

    #[test]
    fn constant_gate_scales_every_level() {
        let s = stack();
        let g = ScalarMap::filled(16, 16, 1.2).unwrap();
        let out = modulate_stack(&s, &g, 0.25).unwrap();
        for (a, b) in out.levels().iter().zip(s.levels()) {
            assert_eq!((a.height(), a.width(), a.channels()), (b.height(), b.width(), b.channels()));
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((f64::from(*x) - 1.2 * f64::from(*y)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fstk_roundtrip_and_layout() {
        let s = stack();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"FSTK");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[8..20], &[8, 0, 0, 0, 8, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(FeatureStack::from_bytes(&bytes).unwrap(), s);
        assert!(FeatureStack::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        assert!(FeatureStack::from_bytes(b"FSTK\0\0\0\0").is_err());
    }
}
