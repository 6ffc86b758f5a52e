//! Super-resolution operators behind one interface.
//!
//! Built-in operators are classical interpolating upsamplers sharing the
//! pixel-center grid and cubic convention of [`crate::ur`]. Anything else
//! plugs in either as an external process speaking the [`crate::plugin`]
//! protocol or, in-process, as a closure.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::linalg::DenseMatrix;
use crate::plugin::PluginSession;
use crate::resample::{self, ResampleMethod, ScaleFactor};

/// Upper bound on `h·w·c` for [`sr_linear_matrix`].
pub const MATRIX_SIZE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SrKind {
    NearestUp,
    BilinearUp,
    BicubicUp,
    Plugin,
    /// An in-process closure; not part of the file/CLI surface.
    Custom,
}

impl SrKind {
    pub fn is_builtin(self) -> bool {
        matches!(self, SrKind::NearestUp | SrKind::BilinearUp | SrKind::BicubicUp)
    }
}

impl FromStr for SrKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" | "nearest_up" => Ok(SrKind::NearestUp),
            "bilinear" | "bilinear_up" => Ok(SrKind::BilinearUp),
            "bicubic" | "bicubic_up" => Ok(SrKind::BicubicUp),
            "plugin" => Ok(SrKind::Plugin),
            _ => Err(Error::Validation(format!("unknown SR kind {s:?}"))),
        }
    }
}

impl fmt::Display for SrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SrKind::NearestUp => "nearest_up",
            SrKind::BilinearUp => "bilinear_up",
            SrKind::BicubicUp => "bicubic_up",
            SrKind::Plugin => "plugin",
            SrKind::Custom => "custom",
        })
    }
}

type SrFn = dyn Fn(&ImageTensor) -> Result<ImageTensor> + Send + Sync;

enum Backend {
    Builtin(ResampleMethod),
    Plugin {
        command: String,
        // Spawned lazily; one session per operator value.
        session: Mutex<Option<PluginSession>>,
    },
    Custom(Arc<SrFn>),
}

/// A configured SR unit.
///
/// Cloning a plugin-backed operator yields an operator with its own,
/// not-yet-started session, so clones can be handed to separate threads.
pub struct SrOperator {
    scale: ScaleFactor,
    backend: Backend,
}

impl SrOperator {
    /// Builds an operator from its kind, enforcing that exactly the plugin
    /// kind carries an endpoint.
    pub fn new(kind: SrKind, scale: ScaleFactor, endpoint: Option<String>) -> Result<Self> {
        match (kind, endpoint) {
            (SrKind::Plugin, Some(cmd)) if !cmd.trim().is_empty() => Ok(SrOperator::plugin(cmd, scale)),
            (SrKind::Plugin, _) => Err(Error::Validation("plugin SR requires a command".into())),
            (SrKind::Custom, _) => Err(Error::Validation(
                "custom SR operators are built with SrOperator::custom".into(),
            )),
            (_, Some(_)) => Err(Error::Validation(format!("{kind} SR does not take an endpoint"))),
            (SrKind::NearestUp, None) => Ok(SrOperator::builtin(ResampleMethod::Nearest, scale)),
            (SrKind::BilinearUp, None) => Ok(SrOperator::builtin(ResampleMethod::Bilinear, scale)),
            (SrKind::BicubicUp, None) => Ok(SrOperator::builtin(ResampleMethod::Bicubic, scale)),
        }
    }

    fn builtin(method: ResampleMethod, scale: ScaleFactor) -> Self {
        SrOperator {
            scale,
            backend: Backend::Builtin(method),
        }
    }

    pub fn nearest(scale: ScaleFactor) -> Self {
        Self::builtin(ResampleMethod::Nearest, scale)
    }

    pub fn bilinear(scale: ScaleFactor) -> Self {
        Self::builtin(ResampleMethod::Bilinear, scale)
    }

    pub fn bicubic(scale: ScaleFactor) -> Self {
        Self::builtin(ResampleMethod::Bicubic, scale)
    }

    /// An external plugin launched with `sh -c command` on first use.
    pub fn plugin(command: impl Into<String>, scale: ScaleFactor) -> Self {
        SrOperator {
            scale,
            backend: Backend::Plugin {
                command: command.into(),
                session: Mutex::new(None),
            },
        }
    }

    /// Wraps an arbitrary function. It must map `h × w × c` to
    /// `h·s × w·s × c`; the result is checked on every call.
    pub fn custom(
        scale: ScaleFactor,
        f: impl Fn(&ImageTensor) -> Result<ImageTensor> + Send + Sync + 'static,
    ) -> Self {
        SrOperator {
            scale,
            backend: Backend::Custom(Arc::new(f)),
        }
    }

    pub fn scale(&self) -> ScaleFactor {
        self.scale
    }

    pub fn kind(&self) -> SrKind {
        match &self.backend {
            Backend::Builtin(ResampleMethod::Nearest) => SrKind::NearestUp,
            Backend::Builtin(ResampleMethod::Bilinear) => SrKind::BilinearUp,
            Backend::Builtin(_) => SrKind::BicubicUp,
            Backend::Plugin { .. } => SrKind::Plugin,
            Backend::Custom(_) => SrKind::Custom,
        }
    }

    pub fn endpoint(&self) -> Option<&str> {
        match &self.backend {
            Backend::Plugin { command, .. } => Some(command),
            _ => None,
        }
    }

    /// Whether the operator is known to be linear.
    pub fn is_linear(&self) -> bool {
        matches!(self.backend, Backend::Builtin(_))
    }

    pub fn apply(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let s = self.scale.get();
        let (h, w, c) = img.dims();
        let out = match &self.backend {
            Backend::Builtin(_) if s == 1 => return Ok(img.clone()),
            Backend::Builtin(method) => return resample::resize(img, h * s, w * s, *method),
            Backend::Custom(f) => f(img)?,
            Backend::Plugin { command, session } => {
                let mut guard = session.lock().unwrap_or_else(|p| p.into_inner());
                if guard.is_none() {
                    *guard = Some(PluginSession::spawn(command)?);
                }
                let result = guard.as_mut().expect("session started").apply(img, s);
                if result.is_err() {
                    // A failed exchange leaves the stream in an unknown state.
                    *guard = None;
                }
                result?
            }
        };
        if out.dims() != (h * s, w * s, c) {
            return Err(Error::Protocol(format!(
                "SR returned {:?}, expected {:?}",
                out.dims(),
                (h * s, w * s, c)
            )));
        }
        Ok(out)
    }
}

/// `SR(img)`.
pub fn sr_apply(op: &SrOperator, img: &ImageTensor) -> Result<ImageTensor> {
    op.apply(img)
}

/// Materializes a built-in operator acting on `h × w × c` inputs as a dense
/// `(h·s·w·s·c) × (h·w·c)` matrix, column `j` being `SR(e_j)`.
pub fn sr_linear_matrix(op: &SrOperator, h: usize, w: usize, c: usize) -> Result<DenseMatrix> {
    if !op.kind().is_builtin() {
        return Err(Error::Unsupported(format!(
            "{} SR has no explicit matrix",
            op.kind()
        )));
    }
    let n = h * w * c;
    if n == 0 || n > MATRIX_SIZE_LIMIT {
        return Err(Error::Validation(format!(
            "input dimension {n} outside 1..={MATRIX_SIZE_LIMIT}"
        )));
    }
    operator_matrix(n, |basis| {
        let img = ImageTensor::new(h, w, c, basis)?;
        Ok(op.apply(&img)?.into_data())
    })
}

/// Probes `f` with every basis vector of `R^n` and stacks the responses as
/// columns.
pub(crate) fn operator_matrix(
    n: usize,
    mut f: impl FnMut(Vec<f64>) -> Result<Vec<f64>>,
) -> Result<DenseMatrix> {
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        columns.push(f(e)?);
    }
    let rows = columns.first().map_or(0, Vec::len);
    let mut m = DenseMatrix::zeros(rows, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    Ok(m)
}

impl Clone for SrOperator {
    fn clone(&self) -> Self {
        let backend = match &self.backend {
            Backend::Builtin(m) => Backend::Builtin(*m),
            Backend::Plugin { command, .. } => Backend::Plugin {
                command: command.clone(),
                session: Mutex::new(None),
            },
            Backend::Custom(f) => Backend::Custom(Arc::clone(f)),
        };
        SrOperator {
            scale: self.scale,
            backend,
        }
    }
}

impl fmt::Debug for SrOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("SrOperator");
        d.field("kind", &self.kind()).field("scale", &self.scale);
        if let Some(cmd) = self.endpoint() {
            d.field("endpoint", &cmd);
        }
        d.finish()
    }
}

impl fmt::Display for SrOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} x{}", self.kind(), self.scale)
    }
}
