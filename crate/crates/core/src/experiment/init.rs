//! Initial concentration and mobility field generators. All fields live on
//! the computational grid and are deterministic functions of their seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::continua::ContinuumSpec;
use crate::error::{Error, Result};
use crate::grid::DomainLayout;

use super::config::{InitialConfig, MobilityConfig};
use super::io::read_cell_csv;
use crate::fine::Mobility;

/// Row boundaries of `count` stripes with seeded random heights.
fn stripe_rows(ny: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if count == 0 || count > ny {
        return Err(Error::Config(format!("{count} stripes do not fit {ny} rows")));
    }
    let w: Vec<f64> = (0..count).map(|_| rng.gen_range(0.6..1.4)).collect();
    let total: f64 = w.iter().sum();
    let mut bounds = vec![0usize];
    let mut acc = 0.0;
    for (s, wi) in w.iter().enumerate() {
        acc += wi;
        let min = bounds[s] + 1;
        let max = ny - (count - s - 1);
        let b = ((acc / total * ny as f64).round() as usize).clamp(min, max);
        bounds.push(b);
    }
    *bounds.last_mut().unwrap() = ny;
    Ok(bounds)
}

fn check_plateaus(plateaus: &[f64], spec: &ContinuumSpec, count: usize) -> Result<()> {
    if plateaus.len() != count {
        return Err(Error::Config(format!("expected {count} plateau values, got {}", plateaus.len())));
    }
    for (k, &p) in plateaus.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("plateau {p} is outside [0, 1]")));
        }
        if count == spec.n() && spec.classify_value(p) != k {
            return Err(Error::Config(format!("plateau {p} does not lie in the interval of continuum {}", k + 1)));
        }
    }
    Ok(())
}

/// Generates the initial concentration on the computational grid.
pub fn initial_concentration(cfg: &InitialConfig, layout: &DomainLayout, spec: &ContinuumSpec) -> Result<Vec<f64>> {
    let comp = &layout.comp;
    let t = &layout.target;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.kind.as_str() {
        "uniform" => {
            if !(0.0..=1.0).contains(&cfg.value) {
                return Err(Error::Config(format!("uniform value {} is outside [0, 1]", cfg.value)));
            }
            Ok(vec![cfg.value; comp.n_cells()])
        }
        "fingers" => {
            let rows = stripe_rows(comp.ny, cfg.stripes, &mut rng)?;
            match cfg.layout.as_str() {
                "interlocked" => {
                    let n = spec.n();
                    check_plateaus(&cfg.plateaus, spec, n)?;
                    let left_margin = t.x0 - comp.x0;
                    let right_margin = comp.x1() - t.x1();
                    let mut c = vec![0.0; comp.n_cells()];
                    for s in 0..cfg.stripes {
                        let q = s % n;
                        // Tips sit inside the margins so the target only sees plateau q.
                        let left_tip = t.x0 - rng.gen_range(0.2..0.8) * left_margin;
                        let right_tip = t.x1() + rng.gen_range(0.2..0.8) * right_margin;
                        for j in rows[s]..rows[s + 1] {
                            for i in 0..comp.nx {
                                let x = comp.center(comp.cell(i, j)).0;
                                let v = if q > 0 && x < left_tip {
                                    cfg.plateaus[0]
                                } else if q + 1 < n && x > right_tip {
                                    cfg.plateaus[n - 1]
                                } else {
                                    cfg.plateaus[q]
                                };
                                c[comp.cell(i, j)] = v;
                            }
                        }
                    }
                    Ok(c)
                }
                "injected" => {
                    check_plateaus(&cfg.plateaus, spec, 2)?;
                    let mut c = vec![cfg.plateaus[1]; comp.n_cells()];
                    for s in (0..cfg.stripes).step_by(2) {
                        let len = cfg.reach * t.lx * rng.gen_range(0.8..1.2);
                        for j in rows[s]..rows[s + 1] {
                            for i in 0..comp.nx {
                                let x = comp.center(comp.cell(i, j)).0 - t.x0;
                                if x < len {
                                    c[comp.cell(i, j)] = cfg.plateaus[0];
                                }
                            }
                        }
                    }
                    Ok(c)
                }
                other => Err(Error::Config(format!("unknown finger layout '{other}'"))),
            }
        }
        "wave" => {
            check_plateaus(&cfg.plateaus, spec, 2)?;
            let y0 = t.y0 + cfg.position * t.ly;
            let k = 2.0 * std::f64::consts::PI * cfg.periods as f64 / t.lx;
            Ok((0..comp.n_cells())
                .map(|cell| {
                    let (x, y) = comp.center(cell);
                    if y < y0 + cfg.amplitude * (k * (x - t.x0)).sin() {
                        cfg.plateaus[0]
                    } else {
                        cfg.plateaus[1]
                    }
                })
                .collect())
        }
        "file" => {
            let c = read_cell_csv(std::path::Path::new(&cfg.file), comp)?;
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("initial field '{}' has values outside [0, 1]", cfg.file)));
            }
            Ok(c)
        }
        other => Err(Error::Config(format!("unknown initial condition '{other}'"))),
    }
}

/// Smooth log-uniform random field: a seeded sum of cosine modes, rescaled
/// so that `log(lambda)` spans `[log min, log max]`.
pub fn random_field(layout: &DomainLayout, min: f64, max: f64, correlation: f64, seed: u64) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && correlation > 0.0) {
        return Err(Error::Config(format!("invalid random mobility bounds {min}..{max} (correlation {correlation})")));
    }
    let comp = &layout.comp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, f64)> = (0..24)
        .map(|_| {
            let kmax = 2.0 * std::f64::consts::PI / correlation;
            let kx = rng.gen_range(-kmax..kmax);
            let ky = rng.gen_range(-kmax..kmax);
            let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let amp = rng.gen_range(0.5..1.0);
            (kx, ky, phase, amp)
        })
        .collect();
    let raw: Vec<f64> = (0..comp.n_cells())
        .map(|k| {
            let (x, y) = comp.center(k);
            modes.iter().map(|(kx, ky, ph, a)| a * (kx * x + ky * y + ph).cos()).sum()
        })
        .collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-300);
    let (lmin, lmax) = (min.ln(), max.ln());
    Ok(raw.iter().map(|r| (lmin + (r - lo) / span * (lmax - lmin)).exp()).collect())
}

pub fn build_mobility(cfg: &MobilityConfig, layout: &DomainLayout, spec: &ContinuumSpec) -> Result<Mobility> {
    let n = layout.comp.n_cells();
    match cfg.kind.as_str() {
        "constant" => {
            if cfg.value <= 0.0 {
                return Err(Error::Config(format!("mobility must be positive, got {}", cfg.value)));
            }
            Ok(Mobility::Field(vec![cfg.value; n]))
        }
        "contrast" => {
            if cfg.values.len() != spec.n() || cfg.values.iter().any(|v| *v <= 0.0) {
                return Err(Error::Config(format!("contrast mobility needs {} positive values", spec.n())));
            }
            Ok(Mobility::Contrast { thresholds: spec.thresholds.clone(), values: cfg.values.clone() })
        }
        "random" => Ok(Mobility::Field(random_field(layout, cfg.min, cfg.max, cfg.correlation, cfg.seed)?)),
        "file" => {
            let f = read_cell_csv(std::path::Path::new(&cfg.file), &layout.comp)?;
            if f.iter().any(|v| *v <= 0.0) {
                return Err(Error::Config(format!("mobility file '{}' has non-positive values", cfg.file)));
            }
            Ok(Mobility::Field(f))
        }
        other => Err(Error::Config(format!("unknown mobility kind '{other}'"))),
    }
}
