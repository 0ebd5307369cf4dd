//! The built-in subcommands.

mod breather;
mod linear;
mod normal_form;
mod stability;

use crate::command::Registry;
use anyhow::Result;
use breather_core::breather::BreatherConfig;
use breather_core::config::KeyValues;

pub fn registry() -> Registry {
    let mut r = Registry::default();
    r.register(Box::new(breather::Find));
    r.register(Box::new(linear::Propagate));
    r.register(Box::new(linear::DecayFitCommand));
    r.register(Box::new(linear::VdcCheck));
    r.register(Box::new(linear::ResolventCheck));
    r.register(Box::new(normal_form::NormalFormCommand));
    r.register(Box::new(stability::Stability));
    r
}

/// Breather solver settings under `prefix` (empty or e.g. `"family."`).
pub(crate) fn breather_config(cfg: &KeyValues, prefix: &str, base: BreatherConfig) -> Result<BreatherConfig> {
    let k = |name: &str| format!("{prefix}{name}");
    Ok(BreatherConfig {
        n: cfg.get_or(&k("n"), base.n)?,
        residual_steps: cfg.get_or(&k("residual_steps"), base.residual_steps)?,
        jacobian_steps: cfg.get_or(&k("jacobian_steps"), base.jacobian_steps)?,
        floquet_steps: cfg.get_or(&k("floquet_steps"), base.floquet_steps)?,
        scheme: cfg.get_or(&k("scheme"), base.scheme)?,
        max_newton: cfg.get_or(&k("max_newton"), base.max_newton)?,
        orbit_samples: cfg.get_or(&k("orbit_samples"), base.orbit_samples)?,
    })
}
