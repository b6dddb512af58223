//! The three end-to-end denoisers behind one entry point.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::aggregation::AggregationOperator;
use crate::classic::{bm3d, DEFAULT_LAMBDA_THR};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::matching::{gather_stacks, plan_matches, MatchConfig};
use crate::train::{Checkpoint, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Bm3dClassic,
    DuBm3d,
    UnetImage,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bm3dClassic, Method::DuBm3d, Method::UnetImage];

    /// Training mode of the checkpoint this method needs, if any.
    pub fn checkpoint_mode(self) -> Option<Mode> {
        match self {
            Method::Bm3dClassic => None,
            Method::DuBm3d => Some(Mode::DuBm3d),
            Method::UnetImage => Some(Mode::UnetImage),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm3d-classic" => Ok(Method::Bm3dClassic),
            "du-bm3d" => Ok(Method::DuBm3d),
            "unet-image" => Ok(Method::UnetImage),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bm3dClassic => "bm3d-classic",
            Method::DuBm3d => "du-bm3d",
            Method::UnetImage => "unet-image",
        })
    }
}

/// Denoises `img` with `method`. The learned methods read their network
/// (and, for `du-bm3d`, the matching configuration) from `checkpoint`;
/// classic BM3D uses the default matching and estimates the noise level.
pub fn denoise_pipeline(img: &Image, method: Method, checkpoint: Option<&Checkpoint>) -> Result<Image> {
    let ckpt = match method.checkpoint_mode() {
        None => return bm3d(img, &MatchConfig::default(), None, DEFAULT_LAMBDA_THR),
        Some(mode) => {
            let ckpt = checkpoint.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a checkpoint")))?;
            if ckpt.mode != mode {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint was trained for {}, not {method}",
                    ckpt.mode
                )));
            }
            ckpt
        }
    };
    let out = match method {
        Method::DuBm3d => {
            let plan = Arc::new(plan_matches(img, &ckpt.matching)?);
            let stacks = gather_stacks(img, &plan)?;
            let denoised = ckpt.params.forward_stack(&stacks)?;
            AggregationOperator::new(plan)?.aggregate(&denoised)?
        }
        _ => ckpt.params.forward_image(img)?,
    };
    if out.pixels().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("denoised image"));
    }
    Ok(out)
}
