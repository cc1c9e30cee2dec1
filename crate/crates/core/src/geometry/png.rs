//! PNG export of masks and layer composites.
//!
//! Composite palette: index 0 is the white background, layer 1 (metal) blue,
//! layer 2 (via) yellow, layer 3 (pad) red. Every other layer `L` uses cycle
//! entry `4 + L mod 8`: black, green, magenta, cyan, orange, purple, teal, gray.

use std::io::Cursor;

use super::{rasterize, GeometryError, RasterFrame, RasterMask};
use crate::gdsii::FlatLayout;

pub const PALETTE: [[u8; 3]; 12] = [
    [255, 255, 255],
    [0, 0, 255],
    [255, 215, 0],
    [220, 0, 0],
    [0, 0, 0],
    [0, 160, 0],
    [200, 0, 200],
    [0, 190, 190],
    [255, 140, 0],
    [110, 40, 160],
    [0, 110, 110],
    [128, 128, 128],
];

/// Palette index for a GDSII layer number.
pub fn layer_color(layer: u16) -> u8 {
    match layer {
        1..=3 => layer as u8,
        l => 4 + (l % 8) as u8,
    }
}

fn encode(width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, palette: Option<Vec<u8>>, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(Cursor::new(&mut out), width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        // Writing into a Vec only fails on invalid parameters, which are fixed here.
        let mut w = enc.write_header().expect("png header");
        w.write_image_data(data).expect("png data");
    }
    out
}

/// 1-bit grayscale image: set pixels black, clear pixels white.
pub fn mask_to_png(mask: &RasterMask) -> Vec<u8> {
    let f = mask.frame();
    let stride = (f.width as usize).div_ceil(8);
    let mut data = vec![0xffu8; stride * f.height as usize];
    for (r, row) in mask.rows().enumerate() {
        for (c, set) in row.into_iter().enumerate() {
            if set {
                data[r * stride + c / 8] &= !(0x80 >> (c % 8));
            }
        }
    }
    encode(f.width, f.height, png::ColorType::Grayscale, png::BitDepth::One, None, &data)
}

/// Indexed-color composite of every polygon layer, later (higher) layers on top.
pub fn render_layout_png(layout: &FlatLayout, frame: &RasterFrame) -> Result<Vec<u8>, GeometryError> {
    let mut data = vec![0u8; frame.width as usize * frame.height as usize];
    for key in layout.layers.keys() {
        let mask = rasterize(layout, *key, frame)?;
        let color = layer_color(key.layer);
        for (r, row) in mask.rows().enumerate() {
            for (c, set) in row.into_iter().enumerate() {
                if set {
                    data[r * frame.width as usize + c] = color;
                }
            }
        }
    }
    let palette = PALETTE.iter().flatten().copied().collect();
    Ok(encode(frame.width, frame.height, png::ColorType::Indexed, png::BitDepth::Eight, Some(palette), &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gdsii::LayerKey;
    use crate::geometry::{rasterize_polygons, rectangle, Point};

    fn decode(bytes: &[u8]) -> (png::OutputInfo, Vec<u8>, Option<Vec<u8>>) {
        let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().unwrap();
        let palette = reader.info().palette.as_ref().map(|p| p.to_vec());
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        (info, buf, palette)
    }

    fn frame() -> RasterFrame {
        RasterFrame {
            width: 10,
            height: 4,
            origin: Point::default(),
            pixel_size: 1.0,
        }
    }

    #[test]
    fn mask_png_marks_set_pixels_black() {
        let m = rasterize_polygons([&rectangle(0.0, 3.0, 9.0, 4.0)], &frame()).unwrap();
        let (info, data, _) = decode(&mask_to_png(&m));
        assert_eq!((info.width, info.height, info.bit_depth), (10, 4, png::BitDepth::One));
        // Top row: nine black pixels then one white.
        assert_eq!(&data[..2], &[0x00, 0x7f]);
        assert_eq!(&data[2..4], &[0xff, 0xff]);
    }

    #[test]
    fn composite_uses_fixed_palette() {
        let mut layout = FlatLayout::default();
        layout.layers.insert(LayerKey::new(1, 0), vec![rectangle(0.0, 0.0, 10.0, 4.0)]);
        layout.layers.insert(LayerKey::new(2, 0), vec![rectangle(0.0, 0.0, 2.0, 2.0)]);
        let (_, data, palette) = decode(&render_layout_png(&layout, &frame()).unwrap());
        let palette = palette.unwrap();
        assert_eq!(&palette[3..6], &[0, 0, 255]);
        assert_eq!(&palette[6..9], &[255, 215, 0]);
        assert_eq!(data[0], 1);
        assert_eq!(data[3 * 10], 2);
    }

    #[test]
    fn color_cycle() {
        assert_eq!(layer_color(0), 4);
        assert_eq!(layer_color(3), 3);
        assert_eq!(layer_color(9), 5);
        assert!((layer_color(u16::MAX) as usize) < PALETTE.len());
    }
}
