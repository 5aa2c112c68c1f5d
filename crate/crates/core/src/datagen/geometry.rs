use rand::Rng;

/// Closed polygon in unit-square coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    /// Shoelace area (absolute value).
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        twice.abs() / 2.0
    }

    /// Even-odd ray-crossing test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

/// Star-shaped polygon around `center`: vertex angles sorted, radii in
/// `[radius/2, radius]`, so the boundary never self-intersects.
pub fn star_polygon(
    rng: &mut impl Rng,
    center: [f64; 2],
    radius: f64,
    n_vertices: usize,
) -> Polygon {
    let mut angles: Vec<f64> = (0..n_vertices)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    let vertices = angles
        .into_iter()
        .map(|a| {
            let r = radius * rng.random_range(0.5..=1.0);
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect();
    Polygon { vertices }
}

/// A polygon with polygonal holes.
#[derive(Clone, Debug)]
pub struct Shape {
    pub outer: Polygon,
    pub cavities: Vec<Polygon>,
}

impl Shape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.outer.contains(p) && !self.cavities.iter().any(|c| c.contains(p))
    }
}

/// Cell-center rasterization of the union of `shapes` onto an `nx × ny` raster.
pub fn rasterize(shapes: &[Shape], nx: usize, ny: usize) -> Vec<bool> {
    let mut out = vec![false; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let p = [(x as f64 + 0.5) / nx as f64, (y as f64 + 0.5) / ny as f64];
            out[y * nx + x] = shapes.iter().any(|s| s.contains(p));
        }
    }
    out
}
