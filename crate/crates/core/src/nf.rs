//! The composed map `NF = SR ∘ UR` and the open-loop pipeline built on it.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::resample::ScaleFactor;
use crate::sr::SrOperator;
use crate::ur::UrOperator;

/// A UR unit and an SR unit with matching scale, so that `NF` maps an
/// `H × W × C` image back to `H × W × C`.
#[derive(Debug, Clone)]
pub struct NfSystem {
    ur: UrOperator,
    sr: SrOperator,
}

impl NfSystem {
    pub fn new(ur: UrOperator, sr: SrOperator) -> Result<Self> {
        if ur.scale() != sr.scale() {
            return Err(Error::Validation(format!(
                "UR scale {} differs from SR scale {}",
                ur.scale(),
                sr.scale()
            )));
        }
        Ok(NfSystem { ur, sr })
    }

    pub fn ur(&self) -> &UrOperator {
        &self.ur
    }

    pub fn sr(&self) -> &SrOperator {
        &self.sr
    }

    pub fn scale(&self) -> ScaleFactor {
        self.ur.scale()
    }

    /// Whether both units are known to be linear (no noise, built-in SR).
    pub fn is_linear(&self) -> bool {
        let ur_linear = match &self.ur {
            UrOperator::Downsample { .. } => true,
            UrOperator::Degrade { spec, .. } => {
                spec.noise_kind == crate::ur::NoiseKind::None || spec.noise_sigma == 0.0
            }
        };
        ur_linear && self.sr.is_linear()
    }

    /// Dimension `d` of the low-resolution space for a high-resolution image
    /// of dimension `hr_dim`.
    pub fn low_res_dim(&self, hr_dim: usize) -> usize {
        let s = self.scale().get();
        hr_dim / (s * s)
    }

    pub fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.sr.apply(&self.ur.apply(x)?)
    }
}

/// `SR(UR(x))`; same shape in and out.
pub fn nf_apply(sys: &NfSystem, x: &ImageTensor) -> Result<ImageTensor> {
    sys.apply(x)
}

/// The open-loop output `SR(x_lq)` for a low-quality input.
pub fn run_open_loop(sys: &NfSystem, x_lq: &ImageTensor) -> Result<ImageTensor> {
    sys.sr.apply(x_lq)
}
