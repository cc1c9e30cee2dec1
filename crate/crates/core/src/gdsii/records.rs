//! Record and data-type codes.

pub const HEADER: u8 = 0x00;
pub const BGNLIB: u8 = 0x01;
pub const LIBNAME: u8 = 0x02;
pub const UNITS: u8 = 0x03;
pub const ENDLIB: u8 = 0x04;
pub const BGNSTR: u8 = 0x05;
pub const STRNAME: u8 = 0x06;
pub const ENDSTR: u8 = 0x07;
pub const BOUNDARY: u8 = 0x08;
pub const PATH: u8 = 0x09;
pub const SREF: u8 = 0x0a;
pub const AREF: u8 = 0x0b;
pub const TEXT: u8 = 0x0c;
pub const LAYER: u8 = 0x0d;
pub const DATATYPE: u8 = 0x0e;
pub const WIDTH: u8 = 0x0f;
pub const XY: u8 = 0x10;
pub const ENDEL: u8 = 0x11;
pub const SNAME: u8 = 0x12;
pub const COLROW: u8 = 0x13;
pub const NODE: u8 = 0x15;
pub const TEXTTYPE: u8 = 0x16;
pub const PRESENTATION: u8 = 0x17;
pub const STRING: u8 = 0x19;
pub const STRANS: u8 = 0x1a;
pub const MAG: u8 = 0x1b;
pub const ANGLE: u8 = 0x1c;
pub const PATHTYPE: u8 = 0x21;
pub const BOX: u8 = 0x2d;

pub const DT_NONE: u8 = 0x00;
pub const DT_BITS: u8 = 0x01;
pub const DT_I16: u8 = 0x02;
pub const DT_I32: u8 = 0x03;
pub const DT_REAL8: u8 = 0x05;
pub const DT_ASCII: u8 = 0x06;

/// Data type every supported record must carry; `None` for records we skip.
pub fn expected_data_type(record: u8) -> Option<u8> {
    Some(match record {
        HEADER | LAYER | DATATYPE | TEXTTYPE | PATHTYPE | COLROW | BGNLIB | BGNSTR => DT_I16,
        LIBNAME | STRNAME | SNAME | STRING => DT_ASCII,
        UNITS | MAG | ANGLE => DT_REAL8,
        ENDLIB | ENDSTR | BOUNDARY | PATH | SREF | AREF | TEXT | ENDEL => DT_NONE,
        WIDTH | XY => DT_I32,
        PRESENTATION | STRANS => DT_BITS,
        _ => return None,
    })
}

pub fn record_name(record: u8) -> &'static str {
    match record {
        HEADER => "HEADER",
        BGNLIB => "BGNLIB",
        LIBNAME => "LIBNAME",
        UNITS => "UNITS",
        ENDLIB => "ENDLIB",
        BGNSTR => "BGNSTR",
        STRNAME => "STRNAME",
        ENDSTR => "ENDSTR",
        BOUNDARY => "BOUNDARY",
        PATH => "PATH",
        SREF => "SREF",
        AREF => "AREF",
        TEXT => "TEXT",
        LAYER => "LAYER",
        DATATYPE => "DATATYPE",
        WIDTH => "WIDTH",
        XY => "XY",
        ENDEL => "ENDEL",
        SNAME => "SNAME",
        COLROW => "COLROW",
        NODE => "NODE",
        TEXTTYPE => "TEXTTYPE",
        PRESENTATION => "PRESENTATION",
        STRING => "STRING",
        STRANS => "STRANS",
        MAG => "MAG",
        ANGLE => "ANGLE",
        PATHTYPE => "PATHTYPE",
        BOX => "BOX",
        _ => "UNKNOWN",
    }
}
