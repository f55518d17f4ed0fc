//! Rician block-fading channels for the server and adversary links.
//!
//! Each link mixes a fixed line-of-sight term with an AR(1) non-line-of-sight
//! process: `h = sqrt(k/(1+k)) * los + sqrt(1/(1+k)) * nlos`, with
//! `nlos(t) = theta * nlos(t-1) + sqrt(1 - theta^2) * innovation(t)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CVector, RngStream};

/// Rounds whose server gain falls below this magnitude are redrawn.
pub const H_MIN: f64 = 1e-3;

const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub num_users: usize,
    pub rician_factor_server: f64,
    pub rician_factor_adversary: f64,
    pub ar_coefficient: f64,
    pub los_component: Complex64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            num_users: 10,
            rician_factor_server: 5.0,
            rician_factor_adversary: 0.0,
            ar_coefficient: 0.0,
            los_component: Complex64::new(1.0, 0.0),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::ConfigError("num_users must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(Error::ConfigError(format!(
                "ar_coefficient {} outside [0, 1)",
                self.ar_coefficient
            )));
        }
        if !(self.rician_factor_server >= 0.0) || !(self.rician_factor_adversary >= 0.0) {
            return Err(Error::ConfigError("Rician factors must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub round: usize,
    pub h: CVector,
    pub g: CVector,
    pub rho: CVector,
    pub nlos_server: CVector,
    pub nlos_adversary: CVector,
    /// Server innovations rejected by the `H_MIN` guard so far.
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains {
    pub rho: CVector,
    pub rho_max: f64,
}

pub fn rice_gain(kappa: f64, los: Complex64, nlos: Complex64) -> Complex64 {
    let los_w = (kappa / (1.0 + kappa)).sqrt();
    let nlos_w = (1.0 / (1.0 + kappa)).sqrt();
    los * los_w + nlos * nlos_w
}

fn gains(kappa: f64, los: Complex64, nlos: &CVector) -> CVector {
    nlos.map(|z| rice_gain(kappa, los, z))
}

fn first_outage(h: &CVector) -> Option<(usize, f64)> {
    h.iter()
        .enumerate()
        .map(|(k, z)| (k, z.norm()))
        .find(|&(_, m)| m < H_MIN)
}

fn build_state(
    cfg: &ChannelConfig,
    round: usize,
    nlos_server: CVector,
    nlos_adversary: CVector,
    redraws: usize,
) -> ChannelState {
    let h = gains(cfg.rician_factor_server, cfg.los_component, &nlos_server);
    let g = gains(cfg.rician_factor_adversary, cfg.los_component, &nlos_adversary);
    let rho = g.zip_map(&h, |a, b| a / b);
    ChannelState {
        round,
        h,
        g,
        rho,
        nlos_server,
        nlos_adversary,
        redraws,
    }
}

fn innovation(rng: &RngStream, link: &str, round: usize, attempt: usize, k: usize) -> CVector {
    rng.derive(&format!("{link}/round{round}/attempt{attempt}"))
        .sample_complex_gaussian(k, 1.0)
}

/// Draws the round-1 channel with i.i.d. `CN(0, 1)` scatter on both links.
pub fn init_channel(cfg: &ChannelConfig, rng: &RngStream) -> Result<ChannelState> {
    cfg.validate()?;
    let k = cfg.num_users;
    let nlos_adversary = innovation(rng, "adversary", 1, 0, k);
    for attempt in 0..MAX_REDRAWS {
        let nlos_server = innovation(rng, "server", 1, attempt, k);
        let h = gains(cfg.rician_factor_server, cfg.los_component, &nlos_server);
        if first_outage(&h).is_none() {
            if attempt > 0 {
                log::debug!("channel round 1 redrawn {attempt} time(s)");
            }
            return Ok(build_state(cfg, 1, nlos_server, nlos_adversary, attempt));
        }
    }
    Err(Error::ChannelOutage {
        user: 0,
        magnitude: 0.0,
    })
}

/// Advances both AR(1) scatter processes by one round.
pub fn advance_round(state: &ChannelState, cfg: &ChannelConfig, rng: &RngStream) -> Result<ChannelState> {
    cfg.validate()?;
    let k = cfg.num_users;
    let next = state.round + 1;
    let phi_a = innovation(rng, "adversary", next, 0, k);
    for attempt in 0..MAX_REDRAWS {
        let phi_s = innovation(rng, "server", next, attempt, k);
        match advance_with_innovation(state, cfg, &phi_s, &phi_a) {
            Ok(mut s) => {
                if attempt > 0 {
                    log::debug!("channel round {next} redrawn {attempt} time(s)");
                }
                s.redraws = state.redraws + attempt;
                return Ok(s);
            }
            Err(Error::ChannelOutage { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ChannelOutage {
        user: 0,
        magnitude: 0.0,
    })
}

/// AR(1) step with caller-supplied innovations; fails if the new server gain
/// violates the outage guard.
pub fn advance_with_innovation(
    state: &ChannelState,
    cfg: &ChannelConfig,
    innovation_server: &CVector,
    innovation_adversary: &CVector,
) -> Result<ChannelState> {
    let theta = cfg.ar_coefficient;
    let w = (1.0 - theta * theta).sqrt();
    let nlos_server = state.nlos_server.zip_map(innovation_server, |x, e| x * theta + e * w);
    let nlos_adversary = state
        .nlos_adversary
        .zip_map(innovation_adversary, |x, e| x * theta + e * w);
    let next = build_state(cfg, state.round + 1, nlos_server, nlos_adversary, state.redraws);
    if let Some((user, magnitude)) = first_outage(&next.h) {
        return Err(Error::ChannelOutage { user, magnitude });
    }
    Ok(next)
}

/// `rho_k = g_k / h_k` and `rho_max = max_k |rho_k|`.
pub fn effective_gains(state: &ChannelState) -> Result<EffectiveGains> {
    if let Some((user, magnitude)) = first_outage(&state.h) {
        return Err(Error::ChannelOutage { user, magnitude });
    }
    let rho = state.g.zip_map(&state.h, |a, b| a / b);
    let rho_max = rho.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(EffectiveGains { rho, rho_max })
}

impl ChannelState {
    /// Builds a state from explicit gains (tests, replay).
    pub fn from_gains(round: usize, h: CVector, g: CVector) -> Self {
        let rho = g.zip_map(&h, |a, b| a / b);
        let k = h.len();
        Self {
            round,
            h,
            g,
            rho,
            nlos_server: CVector::zeros(k),
            nlos_adversary: CVector::zeros(k),
            redraws: 0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.h.len()
    }
}
