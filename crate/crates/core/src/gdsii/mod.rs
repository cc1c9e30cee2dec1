//! GDSII stream codec and document model.
//!
//! A [`Library`] holds an ordered list of [`Structure`]s, each an ordered list of
//! [`Element`]s. Coordinates are integer database units; the library's
//! `meters_per_db_unit` gives their physical size. [`parse_gdsii`] and
//! [`write_gdsii`] convert between this tree and the big-endian record stream;
//! [`flatten`] resolves cell references into a [`FlatLayout`] in meters.

mod flatten;
mod read;
mod real64;
mod records;
mod write;

pub use flatten::{flatten, FlatLayout, FlatText, FlattenError, LayerKey, Top};
pub use read::{parse_gdsii, ParseWarning, Parsed};
pub use real64::{decode_real64, encode_real64, RealError};
pub use write::{write_gdsii, write_gdsii_stamped};

use thiserror::Error;

/// Calendar timestamp as stored in BGNLIB/BGNSTR: year, month, day, hour,
/// minute, second.
pub type DateTime = [i16; 6];

/// Modification and access time pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Timestamps {
    pub modified: DateTime,
    pub accessed: DateTime,
}

impl Timestamps {
    pub fn both(t: DateTime) -> Self {
        Self {
            modified: t,
            accessed: t,
        }
    }
}

/// Source of timestamps for freshly written streams.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime;
}

/// Clock pinned to one instant; makes written files and reports reproducible.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime);

impl Clock for FixedClock {
    fn now(&self) -> DateTime {
        self.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime {
        use chrono::{Datelike, Timelike};
        let t = chrono::Utc::now();
        [
            t.year() as i16,
            t.month() as i16,
            t.day() as i16,
            t.hour() as i16,
            t.minute() as i16,
            t.second() as i16,
        ]
    }
}

/// Integer coordinate in database units. Stored wider than the on-disk i32 so
/// that out-of-range values can be represented and rejected by the writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GdsPoint {
    pub x: i64,
    pub y: i64,
}

impl GdsPoint {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    pub name: String,
    pub user_units_per_db_unit: f64,
    pub meters_per_db_unit: f64,
    pub structures: Vec<Structure>,
    pub timestamps: Timestamps,
}

impl Library {
    /// Empty library with gdspy's default units: 1 µm user unit, 1 nm database unit.
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            user_units_per_db_unit: 1e-3,
            meters_per_db_unit: 1e-9,
            structures: Vec::new(),
            timestamps: Timestamps::default(),
        }
    }

    pub fn structure(&self, name: &str) -> Option<&Structure> {
        self.structures.iter().find(|s| s.name == name)
    }

    /// Checks the library-level invariants: positive units, unique structure names.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.meters_per_db_unit > 0.0 && self.meters_per_db_unit.is_finite())
            || !(self.user_units_per_db_unit > 0.0 && self.user_units_per_db_unit.is_finite())
        {
            return Err(ModelError::InvalidUnits);
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.structures {
            if s.name.is_empty() {
                return Err(ModelError::EmptyName);
            }
            if !seen.insert(s.name.as_str()) {
                return Err(ModelError::DuplicateStructure(s.name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub name: String,
    pub elements: Vec<Element>,
    pub timestamps: Timestamps,
}

impl Structure {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            elements: Vec::new(),
            timestamps: Timestamps::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Boundary(Boundary),
    Path(Path),
    Text(Text),
    Sref(StructRef),
    Aref(ArrayRef),
}

/// Closed polygon. The first point is repeated as the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub layer: u16,
    pub datatype: u16,
    pub xy: Vec<GdsPoint>,
}

impl Boundary {
    /// Builds a boundary from an open ring, appending the closing point.
    pub fn from_ring(layer: u16, datatype: u16, ring: &[GdsPoint]) -> Self {
        let mut xy = ring.to_vec();
        if let (Some(first), Some(last)) = (ring.first(), ring.last()) {
            if first != last {
                xy.push(*first);
            }
        }
        Self {
            layer,
            datatype,
            xy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathType {
    #[default]
    Flush = 0,
    Round = 1,
    Extended = 2,
}

impl PathType {
    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            0 => Some(Self::Flush),
            1 => Some(Self::Round),
            2 => Some(Self::Extended),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub layer: u16,
    pub datatype: u16,
    pub pathtype: PathType,
    /// Negative widths are absolute (unaffected by reference magnification).
    pub width: i32,
    pub xy: Vec<GdsPoint>,
}

/// Reflection, magnification and rotation carried by references and text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Strans {
    pub reflect_x: bool,
    pub abs_mag: bool,
    pub abs_angle: bool,
    pub magnification: Option<f64>,
    pub angle_degrees: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Text {
    pub layer: u16,
    pub texttype: u16,
    pub presentation: Option<u16>,
    pub strans: Option<Strans>,
    pub position: GdsPoint,
    pub string: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructRef {
    pub name: String,
    pub strans: Option<Strans>,
    pub origin: GdsPoint,
}

/// Array reference. `xy` holds the origin, the point displaced by
/// `columns` column pitches, and the point displaced by `rows` row pitches.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRef {
    pub name: String,
    pub strans: Option<Strans>,
    pub columns: u16,
    pub rows: u16,
    pub xy: [GdsPoint; 3],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("units must be positive and finite")]
    InvalidUnits,
    #[error("structure name is empty")]
    EmptyName,
    #[error("duplicate structure name {0:?}")]
    DuplicateStructure(String),
}

/// Errors raised while decoding a record stream.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdsError {
    #[error("stream truncated at byte {offset}: {detail}")]
    TruncatedStream { offset: usize, detail: String },
    #[error("malformed record at byte {offset}: {detail}")]
    MalformedRecord { offset: usize, detail: String },
    #[error("structure defined before UNITS record")]
    MissingUnits,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors raised while encoding a library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WriteError {
    #[error("name {0:?} exceeds 32 bytes")]
    NameTooLong(String),
    #[error("text string exceeds 512 bytes")]
    StringTooLong,
    #[error("coordinate {0} does not fit in a 32-bit database unit")]
    CoordinateOverflow(i64),
    #[error("record payload of {0} bytes exceeds the 65531-byte limit")]
    RecordTooLong(usize),
    #[error("invalid element in structure {structure:?}: {detail}")]
    InvalidElement { structure: String, detail: String },
    #[error(transparent)]
    Real(#[from] RealError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
