use std::fmt;
use std::str::FromStr;

use crate::error::{contract, Result, VieError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Gaussian,
    MixedGpd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    /// Diagonal Gaussian posterior (a flow with zero steps).
    Gaussian,
    Iaf,
    /// Noise-driven network with no tractable density.
    Implicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderKind {
    Mlp,
    Amnn,
}

/// Ablation switchboard: which prior, posterior, decoder, and whether the
/// aggregated posterior is matched to the prior through the critic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantSpec {
    pub prior: PriorKind,
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub prior_match: bool,
}

pub const PRESET_NAMES: [&str; 5] = ["vae", "vae-gpd", "iaf-gpd", "fenchel-gpd", "vie"];

impl VariantSpec {
    pub fn new(prior: PriorKind, encoder: EncoderKind, decoder: DecoderKind, prior_match: bool) -> Result<Self> {
        let v = VariantSpec { prior, encoder, decoder, prior_match };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder == EncoderKind::Implicit && !self.prior_match {
            return contract("an implicit encoder has no density and needs prior matching");
        }
        Ok(())
    }

    pub fn vae() -> Self {
        VariantSpec { prior: PriorKind::Gaussian, encoder: EncoderKind::Gaussian, decoder: DecoderKind::Mlp, prior_match: true }
    }

    pub fn vae_gpd() -> Self {
        VariantSpec { prior: PriorKind::MixedGpd, encoder: EncoderKind::Gaussian, decoder: DecoderKind::Amnn, prior_match: false }
    }

    pub fn iaf_gpd() -> Self {
        VariantSpec { prior: PriorKind::MixedGpd, encoder: EncoderKind::Iaf, decoder: DecoderKind::Amnn, prior_match: false }
    }

    pub fn fenchel_gpd() -> Self {
        VariantSpec { prior: PriorKind::MixedGpd, encoder: EncoderKind::Implicit, decoder: DecoderKind::Amnn, prior_match: true }
    }

    pub fn vie() -> Self {
        VariantSpec { prior: PriorKind::MixedGpd, encoder: EncoderKind::Iaf, decoder: DecoderKind::Amnn, prior_match: true }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vae" => Ok(Self::vae()),
            "vae-gpd" => Ok(Self::vae_gpd()),
            "iaf-gpd" => Ok(Self::iaf_gpd()),
            "fenchel-gpd" => Ok(Self::fenchel_gpd()),
            "vie" => Ok(Self::vie()),
            other => contract(format!("unknown variant '{other}'; expected one of {}", PRESET_NAMES.join(", "))),
        }
    }

    /// Preset name when this matches one, otherwise the field encoding.
    pub fn name(&self) -> String {
        PRESET_NAMES
            .iter()
            .find(|n| Self::preset(n).map(|v| v == *self).unwrap_or(false))
            .map(|n| n.to_string())
            .unwrap_or_else(|| self.to_string())
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prior = match self.prior {
            PriorKind::Gaussian => "gaussian",
            PriorKind::MixedGpd => "mixed-gpd",
        };
        let enc = match self.encoder {
            EncoderKind::Gaussian => "gaussian",
            EncoderKind::Iaf => "iaf",
            EncoderKind::Implicit => "implicit",
        };
        let dec = match self.decoder {
            DecoderKind::Mlp => "mlp",
            DecoderKind::Amnn => "amnn",
        };
        write!(f, "prior={prior} encoder={enc} decoder={dec} prior_match={}", self.prior_match)
    }
}

impl FromStr for VariantSpec {
    type Err = VieError;

    /// Accepts a preset name or the `key=value` encoding written by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if !s.contains('=') {
            return Self::preset(s);
        }
        let (mut prior, mut enc, mut dec, mut pm) = (None, None, None, None);
        for tok in s.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| VieError::Contract(format!("bad variant token '{tok}'")))?;
            match (k, v) {
                ("prior", "gaussian") => prior = Some(PriorKind::Gaussian),
                ("prior", "mixed-gpd") => prior = Some(PriorKind::MixedGpd),
                ("encoder", "gaussian") => enc = Some(EncoderKind::Gaussian),
                ("encoder", "iaf") => enc = Some(EncoderKind::Iaf),
                ("encoder", "implicit") => enc = Some(EncoderKind::Implicit),
                ("decoder", "mlp") => dec = Some(DecoderKind::Mlp),
                ("decoder", "amnn") => dec = Some(DecoderKind::Amnn),
                ("prior_match", "true") => pm = Some(true),
                ("prior_match", "false") => pm = Some(false),
                _ => return contract(format!("bad variant token '{tok}'")),
            }
        }
        match (prior, enc, dec, pm) {
            (Some(p), Some(e), Some(d), Some(m)) => VariantSpec::new(p, e, d, m),
            _ => contract("variant needs prior, encoder, decoder and prior_match"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_ablation_grid() {
        use DecoderKind::{Amnn, Mlp};
        use EncoderKind::{Iaf, Implicit};
        use PriorKind::MixedGpd;
        let rows = [
            ("vae", PriorKind::Gaussian, EncoderKind::Gaussian, Mlp, true),
            ("vae-gpd", MixedGpd, EncoderKind::Gaussian, Amnn, false),
            ("iaf-gpd", MixedGpd, Iaf, Amnn, false),
            ("fenchel-gpd", MixedGpd, Implicit, Amnn, true),
            ("vie", MixedGpd, Iaf, Amnn, true),
        ];
        for (name, p, e, d, m) in rows {
            let v = VariantSpec::preset(name).unwrap();
            assert_eq!(v, VariantSpec { prior: p, encoder: e, decoder: d, prior_match: m });
            assert_eq!(v.name(), name);
            assert_eq!(v.to_string().parse::<VariantSpec>().unwrap(), v);
        }
    }

    #[test]
    fn implicit_without_matching_is_rejected() {
        assert!(VariantSpec::new(PriorKind::MixedGpd, EncoderKind::Implicit, DecoderKind::Amnn, false).is_err());
        assert!(VariantSpec::preset("vie2").is_err());
    }
}
