//! Static overlay images: mask contour, box and edge-to-edge axis line.

use artic_core::eval::axis_segment;
use artic_core::raster::Mask;
use artic_core::{ArticulationKind, Box2D, ProjectedAxis, Vec2};

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [24, 24, 28];

pub fn category_color(kind: ArticulationKind, predicted: bool) -> Rgb {
    let base = match kind {
        ArticulationKind::Rotation => [255, 140, 0],
        ArticulationKind::Translation => [0, 190, 255],
    };
    if predicted {
        base.map(|c| ((c as u16 + 255) / 2) as u8)
    } else {
        base
    }
}

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&BACKGROUND);
        }
        Self { width, height, pixels }
    }

    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Bresenham between rounded endpoints.
    pub fn line(&mut self, a: Vec2, b: Vec2, c: Rgb) {
        let (mut x0, mut y0) = (a.x.floor() as i64, a.y.floor() as i64);
        let (x1, y1) = (b.x.floor() as i64, b.y.floor() as i64);
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    /// Mask pixels with a 4-neighbor outside the mask.
    pub fn contour(&mut self, m: &Mask, c: Rgb) {
        for y in 0..m.height() as i64 {
            for x in 0..m.width() as i64 {
                if !m.get_signed(x, y) {
                    continue;
                }
                let edge = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !m.get_signed(x + dx, y + dy));
                if edge {
                    self.put(x, y, c);
                }
            }
        }
    }

    pub fn rect(&mut self, b: &Box2D, c: Rgb) {
        let (x0, y0) = (b.x_min, b.y_min);
        let (x1, y1) = ((b.x_max - 1.0).max(x0), (b.y_max - 1.0).max(y0));
        let corners = [Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)];
        for i in 0..4 {
            self.line(corners[i], corners[(i + 1) % 4], c);
        }
    }

    /// Rotation axes as given; translation directions through `anchor`.
    pub fn axis(&mut self, axis: &ProjectedAxis, kind: ArticulationKind, anchor: Vec2, c: Rgb) {
        let (w, h) = (self.width as f64, self.height as f64);
        let seg = match kind {
            ArticulationKind::Rotation => axis.clip_to_image(w, h),
            ArticulationKind::Translation => ProjectedAxis::new(axis.theta, axis.normal().dot(&anchor))
                .ok()
                .and_then(|l| axis_segment(&l, ArticulationKind::Rotation, w, h)),
        };
        if let Some((a, b)) = seg {
            self.line(a, b, c);
        }
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory png header");
            writer.write_image_data(&self.pixels).expect("in-memory png data");
        }
        out
    }
}

pub fn box_center(b: &Box2D) -> Vec2 {
    Vec2::new((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)
}
