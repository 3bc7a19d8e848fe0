//! Time-ordered stacks of 8-bit frames.

use ndarray::{s, Array3, Array4, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::codec::CompressionSpec;
use crate::error::{DsmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Channels::Gray),
            3 => Ok(Channels::Rgb),
            other => Err(DsmError::ChannelLayout(format!(
                "{other} channels (expected 1 or 3)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "compression", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Ingested,
    Decompressed(CompressionSpec),
}

/// Channel used to turn color frames into scalar intensity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSelect {
    #[default]
    Red,
    Green,
    Blue,
    /// ITU-R BT.601 luma, rounded to the nearest level.
    Luminance,
}

impl std::str::FromStr for ChannelSelect {
    type Err = DsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "red" | "r" => Ok(ChannelSelect::Red),
            "green" | "g" => Ok(ChannelSelect::Green),
            "blue" | "b" => Ok(ChannelSelect::Blue),
            "luminance" | "luma" | "y" => Ok(ChannelSelect::Luminance),
            other => Err(DsmError::InvalidConfig(format!("unknown channel '{other}'"))),
        }
    }
}

impl std::fmt::Display for ChannelSelect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ChannelSelect::Red => "red",
            ChannelSelect::Green => "green",
            ChannelSelect::Blue => "blue",
            ChannelSelect::Luminance => "luminance",
        };
        f.write_str(name)
    }
}

/// `N` frames of `height × width` pixels with 1 or 3 channels.
///
/// Storage is `(frame, row, column, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    data: Array4<u8>,
    channels: Channels,
    /// Time between consecutive frames, in arbitrary units.
    pub dt: f64,
    /// Camera pixel interval; metadata only.
    pub pixel_pitch: f64,
    pub provenance: Provenance,
}

impl FrameSequence {
    pub fn new(data: Array4<u8>, dt: f64, pixel_pitch: f64, provenance: Provenance) -> Result<Self> {
        let channels = Channels::from_count(data.shape()[3])?;
        if data.shape()[0] == 0 {
            return Err(DsmError::InvalidConfig("empty frame sequence".into()));
        }
        Ok(Self {
            data,
            channels,
            dt,
            pixel_pitch,
            provenance,
        })
    }

    /// Wraps a `(frame, row, column)` grayscale stack.
    pub fn from_gray(stack: Array3<u8>, dt: f64, provenance: Provenance) -> Result<Self> {
        Self::new(stack.insert_axis(Axis(3)), dt, 1.0, provenance)
    }

    /// Builds a sequence from individually decoded frames of shape
    /// `(row, column, channel)`.
    pub fn from_frames(
        frames: Vec<Array3<u8>>,
        dt: f64,
        pixel_pitch: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| DsmError::InvalidConfig("empty frame sequence".into()))?;
        let dim = first.dim();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dim() != dim) {
            return Err(DsmError::DimensionMismatch(format!(
                "frame {i} has shape {:?}, frame 0 has {:?}",
                f.dim(),
                dim
            )));
        }
        let views: Vec<_> = frames.iter().map(|f| f.view()).collect();
        let data = ndarray::stack(Axis(0), &views)
            .map_err(|e| DsmError::DimensionMismatch(e.to_string()))?;
        Self::new(data, dt, pixel_pitch, provenance)
    }

    pub fn len(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn data(&self) -> &Array4<u8> {
        &self.data
    }

    /// Frame `i` as `(row, column, channel)`.
    pub fn frame(&self, i: usize) -> ArrayView3<'_, u8> {
        self.data.index_axis(Axis(0), i)
    }

    /// The scalar `(frame, row, column)` stack consumed by the estimators.
    pub fn gray(&self) -> Result<ArrayView3<'_, u8>> {
        match self.channels {
            Channels::Gray => Ok(self.data.slice(s![.., .., .., 0])),
            Channels::Rgb => Err(DsmError::ChannelLayout(
                "estimators need a single intensity channel; select one first".into(),
            )),
        }
    }

    pub fn gray_frame(&self, i: usize) -> Result<ArrayView2<'_, u8>> {
        Ok(self.gray()?.index_axis_move(Axis(0), i))
    }

    /// Reduces color frames to one channel. Gray sequences pass through.
    pub fn select_channel(&self, channel: ChannelSelect) -> FrameSequence {
        if self.channels == Channels::Gray {
            return self.clone();
        }
        let (n, h, w, _) = self.data.dim();
        let gray = Array3::from_shape_fn((n, h, w), |(i, r, c)| {
            let px = self.data.slice(s![i, r, c, ..]);
            extract_channel(px[0], px[1], px[2], channel)
        });
        FrameSequence {
            data: gray.insert_axis(Axis(3)),
            channels: Channels::Gray,
            dt: self.dt,
            pixel_pitch: self.pixel_pitch,
            provenance: self.provenance.clone(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Same geometry and channel layout.
    pub fn same_layout(&self, other: &FrameSequence) -> bool {
        self.height() == other.height()
            && self.width() == other.width()
            && self.channels == other.channels
    }

    /// Frames in reverse temporal order.
    pub fn reversed(&self) -> FrameSequence {
        let mut out = self.clone();
        out.data = self.data.slice(s![..;-1, .., .., ..]).to_owned();
        out
    }
}

pub fn extract_channel(r: u8, g: u8, b: u8, channel: ChannelSelect) -> u8 {
    match channel {
        ChannelSelect::Red => r,
        ChannelSelect::Green => g,
        ChannelSelect::Blue => b,
        ChannelSelect::Luminance => {
            let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            (y + 0.5).floor().clamp(0.0, 255.0) as u8
        }
    }
}
