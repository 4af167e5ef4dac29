//! Boundary-fitted triangulation of the region enclosed by a closed curve.
//!
//! Boundary vertices come first, equally spaced in arc length. Interior points
//! start from an equilateral lattice, are triangulated with a constrained
//! Delaunay triangulation, smoothed, and triangulated again.

use crate::error::{Error, Result};
use crate::geometry::{Curve, V2};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use std::io::{BufRead, Write};

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<V2>,
    /// counter-clockwise vertex triples
    pub triangles: Vec<[usize; 3]>,
    /// the first `n_boundary` vertices lie on the curve, in order
    pub n_boundary: usize,
    pub boundary_params: Vec<f64>,
    pub h_target: f64,
    pub curve: Curve,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    pub h_max: f64,
    pub h_mean: f64,
}

pub const MIN_ANGLE_DEG: f64 = 20.0;

fn point_in_polygon(poly: &[V2], p: V2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn dist_to_polygon(poly: &[V2], p: V2) -> f64 {
    let n = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let ab = b - a;
        let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        best = best.min((a + ab * t - p).norm());
    }
    best
}

fn orient(a: V2, b: V2, c: V2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Parameters equally spaced in arc length.
pub fn arclength_params(curve: &Curve, n: usize) -> Vec<f64> {
    let ns = 8192.max(64 * curve.kmax());
    let dx = curve.x.derivative(1).samples(ns);
    let dy = curve.y.derivative(1).samples(ns);
    let speed: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).collect();
    let mut cum = vec![0.0; ns + 1];
    for i in 0..ns {
        cum[i + 1] = cum[i] + 0.5 * (speed[i] + speed[(i + 1) % ns]) / ns as f64;
    }
    let total = cum[ns];
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for j in 0..n {
        let target = total * j as f64 / n as f64;
        while k + 1 < ns && cum[k + 1] < target {
            k += 1;
        }
        let seg = cum[k + 1] - cum[k];
        let f = if seg > 0.0 { (target - cum[k]) / seg } else { 0.0 };
        out.push((k as f64 + f) / ns as f64);
    }
    out
}

fn triangulate(points: &[V2], nb: usize, poly: &[V2]) -> Result<Vec<[usize; 3]>> {
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut handles = Vec::with_capacity(points.len());
    let mut back = std::collections::HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let h = cdt
            .insert(Point2::new(p.x, p.y))
            .map_err(|e| Error::MeshingFailure(format!("insertion failed: {e:?}")))?;
        if back.insert(h.index(), i).is_some() {
            return Err(Error::MeshingFailure("duplicate vertex".into()));
        }
        handles.push(h);
    }
    for j in 0..nb {
        let (a, b) = (handles[j], handles[(j + 1) % nb]);
        if !cdt.can_add_constraint(a, b) {
            return Err(Error::MeshingFailure(format!("boundary edge {j} crosses another constraint")));
        }
        cdt.add_constraint(a, b);
    }
    let mut tris = Vec::new();
    for f in cdt.inner_faces() {
        let v = f.vertices().map(|v| back[&v.fix().index()]);
        let (a, b, c) = (points[v[0]], points[v[1]], points[v[2]]);
        let centroid = (a + b + c) / 3.0;
        if !point_in_polygon(poly, centroid) {
            continue;
        }
        if orient(a, b, c) > 0.0 {
            tris.push(v);
        } else {
            tris.push([v[0], v[2], v[1]]);
        }
    }
    Ok(tris)
}

impl Mesh {
    /// Meshes the region enclosed by `curve` with target size `h`.
    pub fn build(curve: &Curve, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("mesh size must be positive, got {h}")));
        }
        let perimeter = curve.perimeter(8192.max(64 * curve.kmax()));
        let nb = ((perimeter / h).ceil() as usize).max(8);
        let params = arclength_params(curve, nb);
        let poly: Vec<V2> = params.iter().map(|&y| curve.point(y)).collect();
        let (mut lo, mut hi) = (poly[0], poly[0]);
        for p in &poly {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let dy = h * 3f64.sqrt() / 2.0;
        let mut points = poly.clone();
        let mut row = 0;
        let mut y = lo.y + 0.5 * dy;
        while y < hi.y {
            let shift = if row % 2 == 0 { 0.0 } else { 0.5 * h };
            let mut x = lo.x + shift + 0.25 * h;
            while x < hi.x {
                let p = V2::new(x, y);
                if point_in_polygon(&poly, p) && dist_to_polygon(&poly, p) >= 0.7 * h {
                    points.push(p);
                }
                x += h;
            }
            y += dy;
            row += 1;
        }
        let mut tris = triangulate(&points, nb, &poly)?;
        // Laplacian smoothing of interior points, then a fresh triangulation
        for _ in 0..6 {
            let mut sum = vec![V2::zeros(); points.len()];
            let mut cnt = vec![0usize; points.len()];
            for t in &tris {
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    sum[a] += points[b];
                    cnt[a] += 1;
                    sum[b] += points[a];
                    cnt[b] += 1;
                }
            }
            for i in nb..points.len() {
                if cnt[i] > 0 {
                    let p = sum[i] / cnt[i] as f64;
                    if point_in_polygon(&poly, p) && dist_to_polygon(&poly, p) >= 0.4 * h {
                        points[i] = p;
                    }
                }
            }
            tris = triangulate(&points, nb, &poly)?;
        }
        let mesh = Self {
            vertices: points,
            triangles: tris,
            n_boundary: nb,
            boundary_params: params,
            h_target: h,
            curve: curve.clone(),
        };
        let q = mesh.quality();
        if q.min_angle_deg < MIN_ANGLE_DEG {
            return Err(Error::MeshingFailure(format!(
                "minimum angle {:.2} deg below {MIN_ANGLE_DEG}",
                q.min_angle_deg
            )));
        }
        let used: std::collections::HashSet<usize> = mesh.triangles.iter().flatten().cloned().collect();
        if used.len() != mesh.vertices.len() {
            return Err(Error::MeshingFailure("orphan vertices after triangulation".into()));
        }
        Ok(mesh)
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_angle = f64::INFINITY;
        let mut hmax = 0.0f64;
        let mut hsum = 0.0;
        let mut count = 0usize;
        for t in &self.triangles {
            let p = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                let (u, v) = (b - a, c - a);
                let ang = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
                min_angle = min_angle.min(ang.to_degrees());
                let e = u.norm();
                hmax = hmax.max(e);
                hsum += e;
                count += 1;
            }
        }
        MeshQuality { min_angle_deg: min_angle, h_max: hmax, h_mean: hsum / count as f64 }
    }

    /// Sum of straight-sided triangle areas.
    pub fn polygon_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| 0.5 * orient(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]))
            .sum()
    }

    /// Plain-text export: vertex, triangle and boundary-parameter sections.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# fsi mesh v1")?;
        writeln!(w, "h_target {}", self.h_target)?;
        writeln!(w, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", v.x, v.y)?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "boundary {}", self.n_boundary)?;
        for y in &self.boundary_params {
            writeln!(w, "{y:.17e}")?;
        }
        Ok(())
    }

    /// Reads the format of [`Mesh::write_text`]; the curve supplies curved edges.
    pub fn read_text<R: BufRead>(r: R, curve: &Curve) -> Result<Self> {
        let mut toks = Tokens::new(r)?;
        toks.keyword("h_target")?;
        let h_target = toks.number()?;
        toks.keyword("vertices")?;
        let nv = toks.number()? as usize;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push(V2::new(toks.number()?, toks.number()?));
        }
        toks.keyword("triangles")?;
        let nt = toks.number()? as usize;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let t = [toks.index(nv)?, toks.index(nv)?, toks.index(nv)?];
            triangles.push(t);
        }
        toks.keyword("boundary")?;
        let nb = toks.number()? as usize;
        let params = (0..nb).map(|_| toks.number()).collect::<Result<Vec<f64>>>()?;
        Ok(Self { vertices, triangles, n_boundary: nb, boundary_params: params, h_target, curve: curve.clone() })
    }
}

struct Tokens {
    items: std::vec::IntoIter<String>,
}

impl Tokens {
    fn new<R: BufRead>(r: R) -> Result<Self> {
        let mut v = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.starts_with('#') {
                v.extend(line.split_whitespace().map(str::to_string));
            }
        }
        Ok(Self { items: v.into_iter() })
    }

    fn next(&mut self) -> Result<String> {
        self.items.next().ok_or_else(|| Error::Io("mesh file: unexpected end".into()))
    }

    fn keyword(&mut self, key: &str) -> Result<()> {
        let t = self.next()?;
        if t == key {
            Ok(())
        } else {
            Err(Error::Io(format!("mesh file: expected '{key}', found '{t}'")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse().map_err(|_| Error::Io(format!("mesh file: bad number '{t}'")))
    }

    fn index(&mut self, bound: usize) -> Result<usize> {
        let t = self.next()?;
        match t.parse::<usize>() {
            Ok(i) if i < bound => Ok(i),
            _ => Err(Error::Io(format!("mesh file: bad vertex index '{t}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn disk_mesh_basics() {
        let c = Curve::circle(1.0);
        let m = Mesh::build(&c, 0.2).unwrap();
        let expect = 2.0 * PI / 0.2;
        assert!((m.n_boundary as f64 - expect).abs() <= 0.2 * expect);
        assert!(m.quality().min_angle_deg >= MIN_ANGLE_DEG);
        for t in &m.triangles {
            assert!(orient(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]) > 0.0);
        }
        for j in 0..m.n_boundary {
            assert!((m.vertices[j].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn polygon_area_converges_quadratically() {
        let c = Curve::circle(1.0);
        let e1 = (Mesh::build(&c, 0.2).unwrap().polygon_area() - PI).abs();
        let e2 = (Mesh::build(&c, 0.1).unwrap().polygon_area() - PI).abs();
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.3, "rate {rate}");
    }

    #[test]
    fn text_round_trip() {
        let c = Curve::ellipse(1.0, 0.6);
        let m = Mesh::build(&c, 0.25).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh::read_text(std::io::Cursor::new(buf), &c).unwrap();
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.n_boundary, m.n_boundary);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert_eq!(a, b);
        }
    }
}
