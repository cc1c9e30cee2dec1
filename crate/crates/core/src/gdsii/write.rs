use byteorder::{BigEndian, WriteBytesExt};

use super::real64::encode_real64;
use super::records::*;
use super::*;

const MAX_NAME: usize = 32;
const MAX_STRING: usize = 512;
const MAX_PAYLOAD: usize = u16::MAX as usize - 4;
const STREAM_VERSION: i16 = 600;

/// Serializes `lib` in canonical form, keeping its stored timestamps.
///
/// Record order is fixed: HEADER, BGNLIB, LIBNAME, UNITS, structures, ENDLIB;
/// within elements LAYER, DATATYPE/TEXTTYPE, PRESENTATION, PATHTYPE, WIDTH,
/// STRANS/MAG/ANGLE, COLROW, XY. Strings are NUL-padded to even length.
pub fn write_gdsii(lib: &Library) -> Result<Vec<u8>, WriteError> {
    lib.validate()?;
    let mut w = Writer { out: Vec::new() };
    w.library(lib)?;
    Ok(w.out)
}

/// Like [`write_gdsii`] but stamps the library and every structure with `clock`.
pub fn write_gdsii_stamped(lib: &Library, clock: &dyn Clock) -> Result<Vec<u8>, WriteError> {
    let stamp = Timestamps::both(clock.now());
    let mut lib = lib.clone();
    lib.timestamps = stamp;
    for s in &mut lib.structures {
        s.timestamps = stamp;
    }
    write_gdsii(&lib)
}

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn record(&mut self, kind: u8, data_type: u8, payload: &[u8]) -> Result<(), WriteError> {
        if payload.len() > MAX_PAYLOAD {
            return Err(WriteError::RecordTooLong(payload.len()));
        }
        self.out
            .write_u16::<BigEndian>((payload.len() + 4) as u16)
            .expect("vec write");
        self.out.push(kind);
        self.out.push(data_type);
        self.out.extend_from_slice(payload);
        Ok(())
    }

    fn empty(&mut self, kind: u8) -> Result<(), WriteError> {
        self.record(kind, DT_NONE, &[])
    }

    fn i16s(&mut self, kind: u8, values: &[i16]) -> Result<(), WriteError> {
        let mut p = Vec::with_capacity(values.len() * 2);
        for v in values {
            p.write_i16::<BigEndian>(*v).expect("vec write");
        }
        self.record(kind, DT_I16, &p)
    }

    fn bits(&mut self, kind: u8, value: u16) -> Result<(), WriteError> {
        self.record(kind, DT_BITS, &value.to_be_bytes())
    }

    fn reals(&mut self, kind: u8, values: &[f64]) -> Result<(), WriteError> {
        let mut p = Vec::with_capacity(values.len() * 8);
        for v in values {
            p.extend_from_slice(&encode_real64(*v)?);
        }
        self.record(kind, DT_REAL8, &p)
    }

    fn ascii(&mut self, kind: u8, s: &str) -> Result<(), WriteError> {
        let mut p = s.as_bytes().to_vec();
        if p.len() % 2 == 1 {
            p.push(0);
        }
        self.record(kind, DT_ASCII, &p)
    }

    fn xy(&mut self, points: &[GdsPoint]) -> Result<(), WriteError> {
        let mut p = Vec::with_capacity(points.len() * 8);
        for pt in points {
            for c in [pt.x, pt.y] {
                let v = i32::try_from(c).map_err(|_| WriteError::CoordinateOverflow(c))?;
                p.write_i32::<BigEndian>(v).expect("vec write");
            }
        }
        self.record(XY, DT_I32, &p)
    }

    fn timestamps(&mut self, kind: u8, t: &Timestamps) -> Result<(), WriteError> {
        let mut v = [0i16; 12];
        v[..6].copy_from_slice(&t.modified);
        v[6..].copy_from_slice(&t.accessed);
        self.i16s(kind, &v)
    }

    fn library(&mut self, lib: &Library) -> Result<(), WriteError> {
        self.i16s(HEADER, &[STREAM_VERSION])?;
        self.timestamps(BGNLIB, &lib.timestamps)?;
        self.ascii(LIBNAME, &lib.name)?;
        self.reals(UNITS, &[lib.user_units_per_db_unit, lib.meters_per_db_unit])?;
        for s in &lib.structures {
            self.structure(s)?;
        }
        self.empty(ENDLIB)
    }

    fn structure(&mut self, s: &Structure) -> Result<(), WriteError> {
        check_name(&s.name)?;
        self.timestamps(BGNSTR, &s.timestamps)?;
        self.ascii(STRNAME, &s.name)?;
        for e in &s.elements {
            self.element(&s.name, e)?;
        }
        self.empty(ENDSTR)
    }

    fn strans(&mut self, strans: &Option<Strans>) -> Result<(), WriteError> {
        let Some(t) = strans else { return Ok(()) };
        let mut flags = 0u16;
        if t.reflect_x {
            flags |= 0x8000;
        }
        if t.abs_mag {
            flags |= 0x0004;
        }
        if t.abs_angle {
            flags |= 0x0002;
        }
        self.bits(STRANS, flags)?;
        if let Some(m) = t.magnification {
            self.reals(MAG, &[m])?;
        }
        if let Some(a) = t.angle_degrees {
            self.reals(ANGLE, &[a])?;
        }
        Ok(())
    }

    fn element(&mut self, structure: &str, e: &Element) -> Result<(), WriteError> {
        let invalid = |detail: &str| WriteError::InvalidElement {
            structure: structure.to_string(),
            detail: detail.to_string(),
        };
        match e {
            Element::Boundary(b) => {
                if b.xy.len() < 4 || b.xy.first() != b.xy.last() {
                    return Err(invalid("boundary must be a closed ring of at least 4 points"));
                }
                self.empty(BOUNDARY)?;
                self.i16s(LAYER, &[b.layer as i16])?;
                self.i16s(DATATYPE, &[b.datatype as i16])?;
                self.xy(&b.xy)?;
            }
            Element::Path(p) => {
                if p.xy.len() < 2 {
                    return Err(invalid("path needs at least 2 points"));
                }
                self.empty(PATH)?;
                self.i16s(LAYER, &[p.layer as i16])?;
                self.i16s(DATATYPE, &[p.datatype as i16])?;
                self.i16s(PATHTYPE, &[p.pathtype as i16])?;
                self.record(WIDTH, DT_I32, &p.width.to_be_bytes())?;
                self.xy(&p.xy)?;
            }
            Element::Text(t) => {
                if t.string.len() > MAX_STRING {
                    return Err(WriteError::StringTooLong);
                }
                self.empty(TEXT)?;
                self.i16s(LAYER, &[t.layer as i16])?;
                self.i16s(TEXTTYPE, &[t.texttype as i16])?;
                if let Some(p) = t.presentation {
                    self.bits(PRESENTATION, p)?;
                }
                self.strans(&t.strans)?;
                self.xy(&[t.position])?;
                self.ascii(STRING, &t.string)?;
            }
            Element::Sref(r) => {
                check_name(&r.name)?;
                self.empty(SREF)?;
                self.ascii(SNAME, &r.name)?;
                self.strans(&r.strans)?;
                self.xy(&[r.origin])?;
            }
            Element::Aref(r) => {
                check_name(&r.name)?;
                if r.columns == 0 || r.rows == 0 || r.columns > i16::MAX as u16 || r.rows > i16::MAX as u16 {
                    return Err(invalid("array reference needs 1..=32767 columns and rows"));
                }
                self.empty(AREF)?;
                self.ascii(SNAME, &r.name)?;
                self.strans(&r.strans)?;
                self.i16s(COLROW, &[r.columns as i16, r.rows as i16])?;
                self.xy(&r.xy)?;
            }
        }
        self.empty(ENDEL)
    }
}

fn check_name(name: &str) -> Result<(), WriteError> {
    if name.len() > MAX_NAME {
        return Err(WriteError::NameTooLong(name.to_string()));
    }
    if name.is_empty() {
        return Err(ModelError::EmptyName.into());
    }
    Ok(())
}
