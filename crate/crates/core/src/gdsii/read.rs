use super::real64::decode_real64;
use super::records::*;
use super::*;

/// Non-fatal oddity encountered while parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseWarning {
    pub offset: usize,
    pub message: String,
}

/// A decoded library plus whatever the decoder chose to skip or repair.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub library: Library,
    pub warnings: Vec<ParseWarning>,
}

/// Decodes a GDSII record stream.
///
/// Unknown record types are skipped and reported in [`Parsed::warnings`];
/// BOX and NODE elements are skipped whole. Bytes after ENDLIB are ignored.
pub fn parse_gdsii(bytes: &[u8]) -> Result<Parsed, GdsError> {
    let mut parser = Parser {
        stream: Stream { bytes, pos: 0 },
        peeked: None,
        warnings: Vec::new(),
    };
    let library = parser.library()?;
    library.validate()?;
    Ok(Parsed {
        library,
        warnings: parser.warnings,
    })
}

#[derive(Debug, Clone, Copy)]
struct Record<'a> {
    offset: usize,
    kind: u8,
    data_type: u8,
    data: &'a [u8],
}

struct Stream<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Stream<'a> {
    fn next(&mut self) -> Result<Record<'a>, GdsError> {
        let offset = self.pos;
        let remaining = self.bytes.len() - offset;
        if remaining < 4 {
            return Err(GdsError::TruncatedStream {
                offset,
                detail: "stream ended before ENDLIB".into(),
            });
        }
        let header = &self.bytes[offset..offset + 4];
        let len = u16::from_be_bytes([header[0], header[1]]) as usize;
        if len < 4 || !len.is_multiple_of(2) {
            return Err(GdsError::MalformedRecord {
                offset,
                detail: format!("invalid record length {len}"),
            });
        }
        if len > remaining {
            return Err(GdsError::TruncatedStream {
                offset,
                detail: format!("record length {len} exceeds {remaining} remaining bytes"),
            });
        }
        self.pos += len;
        let record = Record {
            offset,
            kind: header[2],
            data_type: header[3],
            data: &self.bytes[offset + 4..offset + len],
        };
        check_shape(&record)?;
        Ok(record)
    }
}

fn check_shape(r: &Record) -> Result<(), GdsError> {
    let Some(expected) = expected_data_type(r.kind) else {
        return Ok(());
    };
    let malformed = |detail: String| GdsError::MalformedRecord {
        offset: r.offset,
        detail,
    };
    if r.data_type != expected {
        return Err(malformed(format!(
            "{} carries data type {:#04x}, expected {:#04x}",
            record_name(r.kind),
            r.data_type,
            expected
        )));
    }
    let unit = match expected {
        DT_NONE => {
            if !r.data.is_empty() {
                return Err(malformed(format!("{} must not carry data", record_name(r.kind))));
            }
            return Ok(());
        }
        DT_BITS | DT_I16 => 2,
        DT_I32 => 4,
        DT_REAL8 => 8,
        _ => 1,
    };
    if !r.data.len().is_multiple_of(unit) || (expected != DT_ASCII && r.data.is_empty()) {
        return Err(malformed(format!(
            "{} payload of {} bytes is not a whole number of {unit}-byte values",
            record_name(r.kind),
            r.data.len()
        )));
    }
    Ok(())
}

fn i16s(data: &[u8]) -> Vec<i16> {
    data.chunks_exact(2)
        .map(|c| i16::from_be_bytes([c[0], c[1]]))
        .collect()
}

fn i32s(data: &[u8]) -> Vec<i32> {
    data.chunks_exact(4)
        .map(|c| i32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn reals(data: &[u8]) -> Vec<f64> {
    data.chunks_exact(8)
        .map(|c| decode_real64(c.try_into().expect("chunk of 8")))
        .collect()
}

fn ascii(data: &[u8]) -> String {
    let end = data.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
    String::from_utf8_lossy(&data[..end]).into_owned()
}

fn bits(data: &[u8]) -> u16 {
    u16::from_be_bytes([data[0], data[1]])
}

struct Parser<'a> {
    stream: Stream<'a>,
    peeked: Option<Record<'a>>,
    warnings: Vec<ParseWarning>,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<Record<'a>, GdsError> {
        match self.peeked.take() {
            Some(r) => Ok(r),
            None => self.stream.next(),
        }
    }

    fn peek(&mut self) -> Result<Record<'a>, GdsError> {
        let r = self.next()?;
        self.peeked = Some(r);
        Ok(r)
    }

    fn warn(&mut self, offset: usize, message: impl Into<String>) {
        self.warnings.push(ParseWarning {
            offset,
            message: message.into(),
        });
    }

    fn skip_unknown(&mut self, r: &Record) {
        self.warn(
            r.offset,
            format!("skipped unsupported record type {:#04x}", r.kind),
        );
    }

    fn timestamps(&self, r: &Record) -> Result<Timestamps, GdsError> {
        let v = i16s(r.data);
        if v.len() != 12 {
            return Err(GdsError::MalformedRecord {
                offset: r.offset,
                detail: format!("{} holds {} values, expected 12", record_name(r.kind), v.len()),
            });
        }
        let mut t = Timestamps::default();
        t.modified.copy_from_slice(&v[..6]);
        t.accessed.copy_from_slice(&v[6..]);
        Ok(t)
    }

    fn library(&mut self) -> Result<Library, GdsError> {
        let mut lib = Library::new("");
        let mut units_seen = false;
        let first = self.peek()?;
        if first.kind == HEADER {
            self.next()?;
        } else {
            self.warn(first.offset, "stream does not start with HEADER");
        }
        loop {
            let r = self.next()?;
            match r.kind {
                BGNLIB => lib.timestamps = self.timestamps(&r)?,
                LIBNAME => lib.name = ascii(r.data),
                UNITS => {
                    let v = reals(r.data);
                    if v.len() != 2 {
                        return Err(GdsError::MalformedRecord {
                            offset: r.offset,
                            detail: format!("UNITS holds {} reals, expected 2", v.len()),
                        });
                    }
                    lib.user_units_per_db_unit = v[0];
                    lib.meters_per_db_unit = v[1];
                    units_seen = true;
                }
                BGNSTR => {
                    if !units_seen {
                        return Err(GdsError::MissingUnits);
                    }
                    let timestamps = self.timestamps(&r)?;
                    let s = self.structure(timestamps)?;
                    lib.structures.push(s);
                }
                ENDLIB => return Ok(lib),
                HEADER => self.warn(r.offset, "repeated HEADER record"),
                _ => self.skip_unknown(&r),
            }
        }
    }

    fn structure(&mut self, timestamps: Timestamps) -> Result<Structure, GdsError> {
        let mut s = Structure::new("");
        s.timestamps = timestamps;
        loop {
            let r = self.next()?;
            match r.kind {
                STRNAME => s.name = ascii(r.data),
                ENDSTR => return Ok(s),
                BOUNDARY | PATH | TEXT | SREF | AREF => {
                    if let Some(e) = self.element(r)? {
                        s.elements.push(e);
                    }
                }
                BOX | NODE => {
                    self.warn(
                        r.offset,
                        format!("skipped unsupported {} element", record_name(r.kind)),
                    );
                    self.skip_element()?;
                }
                _ => self.skip_unknown(&r),
            }
        }
    }

    fn skip_element(&mut self) -> Result<(), GdsError> {
        loop {
            if self.next()?.kind == ENDEL {
                return Ok(());
            }
        }
    }

    fn element(&mut self, start: Record<'a>) -> Result<Option<Element>, GdsError> {
        let mut a = Attrs::default();
        loop {
            let r = self.next()?;
            match r.kind {
                ENDEL => break,
                LAYER => a.layer = Some(i16s(r.data)[0] as u16),
                DATATYPE => a.datatype = Some(i16s(r.data)[0] as u16),
                TEXTTYPE => a.texttype = Some(i16s(r.data)[0] as u16),
                PATHTYPE => a.pathtype = Some((r.offset, i16s(r.data)[0])),
                WIDTH => a.width = Some(i32s(r.data)[0]),
                XY => {
                    a.xy = i32s(r.data)
                        .chunks_exact(2)
                        .map(|c| GdsPoint::new(c[0] as i64, c[1] as i64))
                        .collect();
                    a.xy_seen = true;
                }
                SNAME => a.sname = Some(ascii(r.data)),
                COLROW => {
                    let v = i16s(r.data);
                    if v.len() != 2 {
                        return Err(GdsError::MalformedRecord {
                            offset: r.offset,
                            detail: "COLROW must hold two values".into(),
                        });
                    }
                    a.colrow = Some((v[0], v[1]));
                }
                STRANS => {
                    let b = bits(r.data);
                    a.strans.get_or_insert_with(Strans::default).reflect_x = b & 0x8000 != 0;
                    a.strans.as_mut().unwrap().abs_mag = b & 0x0004 != 0;
                    a.strans.as_mut().unwrap().abs_angle = b & 0x0002 != 0;
                }
                MAG => a.strans.get_or_insert_with(Strans::default).magnification = Some(reals(r.data)[0]),
                ANGLE => a.strans.get_or_insert_with(Strans::default).angle_degrees = Some(reals(r.data)[0]),
                STRING => a.string = Some(ascii(r.data)),
                PRESENTATION => a.presentation = Some(bits(r.data)),
                BOUNDARY | PATH | TEXT | SREF | AREF | ENDSTR | ENDLIB | BGNSTR => {
                    return Err(GdsError::MalformedRecord {
                        offset: r.offset,
                        detail: format!("{} inside an element without ENDEL", record_name(r.kind)),
                    })
                }
                _ => self.skip_unknown(&r),
            }
        }
        self.build(start, a).map(Some)
    }

    fn build(&mut self, start: Record, a: Attrs) -> Result<Element, GdsError> {
        let missing = |what: &str| GdsError::MalformedRecord {
            offset: start.offset,
            detail: format!("{} element lacks {what}", record_name(start.kind)),
        };
        if !a.xy_seen {
            return Err(missing("XY"));
        }
        Ok(match start.kind {
            BOUNDARY => {
                let mut xy = a.xy;
                if xy.first() != xy.last() {
                    self.warn(start.offset, "BOUNDARY ring not closed; closing it");
                    xy.push(xy[0]);
                }
                if xy.len() < 4 {
                    self.warn(start.offset, "BOUNDARY has fewer than 4 points");
                }
                Element::Boundary(Boundary {
                    layer: a.layer.ok_or_else(|| missing("LAYER"))?,
                    datatype: a.datatype.ok_or_else(|| missing("DATATYPE"))?,
                    xy,
                })
            }
            PATH => {
                let pathtype = match a.pathtype {
                    None => PathType::Flush,
                    Some((offset, code)) => PathType::from_code(code).unwrap_or_else(|| {
                        self.warn(offset, format!("unsupported PATHTYPE {code}; treated as flush"));
                        PathType::Flush
                    }),
                };
                if a.xy.len() < 2 {
                    return Err(missing("at least two XY points"));
                }
                Element::Path(Path {
                    layer: a.layer.ok_or_else(|| missing("LAYER"))?,
                    datatype: a.datatype.ok_or_else(|| missing("DATATYPE"))?,
                    pathtype,
                    width: a.width.unwrap_or(0),
                    xy: a.xy,
                })
            }
            TEXT => Element::Text(Text {
                layer: a.layer.ok_or_else(|| missing("LAYER"))?,
                texttype: a.texttype.ok_or_else(|| missing("TEXTTYPE"))?,
                presentation: a.presentation,
                strans: a.strans,
                position: *a.xy.first().ok_or_else(|| missing("a position"))?,
                string: a.string.ok_or_else(|| missing("STRING"))?,
            }),
            SREF => Element::Sref(StructRef {
                name: a.sname.ok_or_else(|| missing("SNAME"))?,
                strans: a.strans,
                origin: *a.xy.first().ok_or_else(|| missing("an origin"))?,
            }),
            AREF => {
                let (columns, rows) = a.colrow.ok_or_else(|| missing("COLROW"))?;
                if columns < 1 || rows < 1 {
                    return Err(missing("positive COLROW counts"));
                }
                if a.xy.len() != 3 {
                    return Err(missing("exactly three XY points"));
                }
                Element::Aref(ArrayRef {
                    name: a.sname.ok_or_else(|| missing("SNAME"))?,
                    strans: a.strans,
                    columns: columns as u16,
                    rows: rows as u16,
                    xy: [a.xy[0], a.xy[1], a.xy[2]],
                })
            }
            _ => unreachable!("element() is only called for element records"),
        })
    }
}

#[derive(Default)]
struct Attrs {
    layer: Option<u16>,
    datatype: Option<u16>,
    texttype: Option<u16>,
    pathtype: Option<(usize, i16)>,
    width: Option<i32>,
    xy: Vec<GdsPoint>,
    xy_seen: bool,
    sname: Option<String>,
    colrow: Option<(i16, i16)>,
    strans: Option<Strans>,
    string: Option<String>,
    presentation: Option<u16>,
}
