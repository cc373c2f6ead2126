//! Binary masks, polygon scan conversion, IoU, boundary extraction and the
//! run-length mask codec.
//!
//! Rasterization samples pixel centers `(i + 0.5, j + 0.5)` under the
//! even-odd rule, so a pixel is set iff its center lies inside the polygon
//! set. Edges use a half-open crossing test which makes exact-cover cases
//! like an axis-aligned square land on whole pixels.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Row-major binary occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask must be at least 1x1");
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRecord("mask must be at least 1x1".into()));
        }
        if bits.len() != width * height {
            return Err(Error::InvalidRecord(format!(
                "mask has {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Bounds-checked lookup over signed coordinates; outside is background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Mean pixel-center coordinate of the set pixels.
    pub fn centroid(&self) -> Option<Vec2> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| Vec2::new(sx / n as f64, sy / n as f64))
    }

    fn fill_spans(&mut self, spans: &[Span]) {
        for s in spans {
            let row = s.row as usize * self.width;
            self.bits[row + s.start as usize..row + s.end as usize].fill(true);
        }
    }
}

/// Closed polygon in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2D {
    pub vertices: Vec<Vec2>,
}

impl Polygon2D {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Degenerate("polygon needs at least 3 vertices"));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::NonFinite("polygon vertex"));
        }
        Ok(Self { vertices })
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n).map(|i| (self.vertices[(i + 1) % n] - self.vertices[i]).norm()).sum()
    }
}

pub(crate) fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

/// Axis-aligned box; max edges are exclusive when derived from masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Box2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("box"));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::InvalidRecord("box min exceeds max".into()));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Rectangle IoU; boxes that do not overlap score 0.
pub fn bbox_iou(a: &Box2D, b: &Box2D) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// `|a & b| / |a | b|`, with two empty masks scoring 0.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Tight box over set pixels, max edges exclusive.
pub fn mask_bbox(m: &Mask) -> Result<Box2D> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..m.height {
        for x in 0..m.width {
            if m.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::EmptyMask);
    }
    Box2D::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64)
}

/// A run of covered pixels `[start, end)` on one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub row: u32,
    pub start: u32,
    pub end: u32,
}

/// Scan-converts a set of rings under the even-odd rule into spans, clipped
/// to the image. Rings with fewer than three vertices or near-zero area are
/// skipped. `out` is cleared first.
pub fn polygon_spans<R: AsRef<[Vec2]>>(rings: &[R], width: usize, height: usize, out: &mut Vec<Span>) {
    out.clear();
    let rings: Vec<&[Vec2]> = rings
        .iter()
        .map(|r| r.as_ref())
        .filter(|r| r.len() >= 3 && signed_area(r).abs() >= 1e-12)
        .collect();
    if rings.is_empty() {
        return;
    }
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in rings.iter().flat_map(|r| r.iter()) {
        ymin = ymin.min(v.y);
        ymax = ymax.max(v.y);
    }
    let first = ((ymin - 0.5).ceil().max(0.0)) as usize;
    let last = ((ymax - 0.5).ceil().min(height as f64)).max(0.0) as usize;
    let mut xs: Vec<f64> = Vec::new();
    for row in first..last.min(height) {
        let y = row as f64 + 0.5;
        xs.clear();
        for ring in &rings {
            let n = ring.len();
            for i in 0..n {
                let (a, b) = (ring[i], ring[(i + 1) % n]);
                if (a.y <= y && y < b.y) || (b.y <= y && y < a.y) {
                    xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            // centers i + 0.5 in [x0, x1)
            let start = (pair[0] - 0.5).ceil().clamp(0.0, width as f64) as u32;
            let end = (pair[1] - 0.5).ceil().clamp(0.0, width as f64) as u32;
            if end > start {
                out.push(Span { row: row as u32, start, end });
            }
        }
    }
}

pub fn rasterize_polygon(poly: &Polygon2D, width: usize, height: usize) -> Mask {
    rasterize_polygons(std::slice::from_ref(poly), width, height)
}

/// Even-odd union of several polygons.
pub fn rasterize_polygons(polys: &[Polygon2D], width: usize, height: usize) -> Mask {
    let rings: Vec<&[Vec2]> = polys.iter().map(|p| p.vertices.as_slice()).collect();
    rasterize_rings(&rings, width, height)
}

pub fn rasterize_rings<R: AsRef<[Vec2]>>(rings: &[R], width: usize, height: usize) -> Mask {
    let mut spans = Vec::new();
    polygon_spans(rings, width, height, &mut spans);
    let mut m = Mask::new(width, height);
    m.fill_spans(&spans);
    m
}

/// Row prefix sums over a mask, for IoU against span sets without
/// materializing the second mask.
#[derive(Debug, Clone)]
pub struct MaskIndex {
    width: usize,
    height: usize,
    prefix: Vec<u32>,
    count: u64,
}

impl MaskIndex {
    pub fn new(m: &Mask) -> Self {
        let stride = m.width + 1;
        let mut prefix = vec![0u32; stride * m.height];
        for y in 0..m.height {
            let row = &mut prefix[y * stride..(y + 1) * stride];
            for x in 0..m.width {
                row[x + 1] = row[x] + m.get(x, y) as u32;
            }
        }
        let count = (0..m.height).map(|y| prefix[y * stride + m.width] as u64).sum();
        Self { width: m.width, height: m.height, prefix, count }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// IoU between the indexed mask and the pixels covered by `spans`.
    /// Spans must be disjoint, as produced by [`polygon_spans`].
    pub fn iou_with_spans(&self, spans: &[Span]) -> f64 {
        let stride = self.width + 1;
        let (mut inter, mut area) = (0u64, 0u64);
        for s in spans {
            let base = s.row as usize * stride;
            inter += (self.prefix[base + s.end as usize] - self.prefix[base + s.start as usize]) as u64;
            area += (s.end - s.start) as u64;
        }
        let union = self.count + area - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Labels 8-connected foreground components; 0 is background.
fn label_components(m: &Mask) -> (Vec<u32>, u32) {
    let (w, h) = (m.width, m.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !m.bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m.bits[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Follows the pixel-edge boundary of one component with the component on
/// the right-hand side, treating diagonal contact as connected. Returns the
/// corners where the heading changes.
fn trace_outer_boundary(labels: &[u32], w: usize, h: usize, id: u32, start: (i64, i64)) -> Vec<Vec2> {
    let fg = |x: i64, y: i64| {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && labels[y as usize * w + x as usize] == id
    };
    // pixel in the quadrant (sx, sy) around corner (x, y)
    let quad = |x: i64, y: i64, sx: i64, sy: i64| {
        fg(x + if sx > 0 { 0 } else { -1 }, y + if sy > 0 { 0 } else { -1 })
    };
    let mut c = start;
    let mut d = (1i64, 0i64);
    let mut out = vec![Vec2::new(start.0 as f64, start.1 as f64)];
    loop {
        c = (c.0 + d.0, c.1 + d.1);
        if c == start {
            break;
        }
        let r = (-d.1, d.0);
        let ahead_left = quad(c.0, c.1, d.0 - r.0, d.1 - r.1);
        let ahead_right = quad(c.0, c.1, d.0 + r.0, d.1 + r.1);
        let nd = if ahead_left {
            (d.1, -d.0)
        } else if ahead_right {
            d
        } else {
            r
        };
        if nd != d {
            out.push(Vec2::new(c.0 as f64, c.1 as f64));
        }
        d = nd;
    }
    out
}

/// Douglas-Peucker on an open chain, keeping both endpoints.
fn simplify_chain(pts: &[Vec2], tol: f64, keep: &mut [bool]) {
    let mut stack = vec![(0usize, pts.len() - 1)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let (pa, pb) = (pts[a], pts[b]);
        let seg = pb - pa;
        let len = seg.norm();
        let mut best = (0.0, a);
        for (i, p) in pts.iter().enumerate().take(b).skip(a + 1) {
            let dist = if len < 1e-12 {
                (p - pa).norm()
            } else {
                (seg.x * (p.y - pa.y) - seg.y * (p.x - pa.x)).abs() / len
            };
            if dist > best.0 {
                best = (dist, i);
            }
        }
        if best.0 > tol {
            keep[best.1] = true;
            stack.push((a, best.1));
            stack.push((best.1, b));
        }
    }
}

/// Douglas-Peucker on a closed ring, anchored at vertex 0 and the vertex
/// farthest from it.
pub fn simplify_ring(ring: &[Vec2], tol: f64) -> Vec<Vec2> {
    let n = ring.len();
    if n <= 3 || tol <= 0.0 {
        return ring.to_vec();
    }
    let far = (1..n)
        .max_by(|&i, &j| (ring[i] - ring[0]).norm().total_cmp(&(ring[j] - ring[0]).norm()))
        .unwrap_or(1);
    let mut closed: Vec<Vec2> = ring.to_vec();
    closed.push(ring[0]);
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    keep[far] = true;
    keep[n] = true;
    simplify_chain(&closed[..=far], tol, &mut keep[..=far]);
    simplify_chain(&closed[far..], tol, &mut keep[far..]);
    let out: Vec<Vec2> = (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect();
    if out.len() < 3 {
        ring.to_vec()
    } else {
        out
    }
}

/// Outer boundary polygons of the 8-connected components of `m`, in raster
/// order of each component's first pixel. Holes are not represented, so
/// rasterizing the result fills them.
pub fn mask_to_boundary_polygons(m: &Mask, simplify_tol: f64) -> Result<Vec<Polygon2D>> {
    let (labels, n) = label_components(m);
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mut starts = vec![None; n as usize + 1];
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 && starts[l as usize].is_none() {
            starts[l as usize] = Some(((i % m.width) as i64, (i / m.width) as i64));
        }
    }
    let mut out = Vec::with_capacity(n as usize);
    for id in 1..=n {
        let start = starts[id as usize].expect("every label has a first pixel");
        let ring = trace_outer_boundary(&labels, m.width, m.height, id, start);
        out.push(Polygon2D::new(simplify_ring(&ring, simplify_tol))?);
    }
    Ok(out)
}

/// Row-major run lengths, alternating from a (possibly empty) run of zeros.
pub fn rle_encode(m: &Mask) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &b in &m.bits {
        if b == current {
            run += 1;
        } else {
            counts.push(run);
            current = b;
            run = 1;
        }
    }
    counts.push(run);
    counts
}

pub fn rle_decode(counts: &[u32], width: usize, height: usize) -> Result<Mask> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let expected = (width * height) as u64;
    if total != expected {
        return Err(Error::RleLength { got: total, expected });
    }
    let mut bits = Vec::with_capacity(width * height);
    let mut value = false;
    for &c in counts {
        bits.extend(std::iter::repeat_n(value, c as usize));
        value = !value;
    }
    Mask::from_bits(width, height, bits)
}
