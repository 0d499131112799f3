/// Structured triangulation of a rectangle.
///
/// Each grid cell is split along one diagonal, alternating in a checkerboard
/// pattern so the mesh has no preferred direction.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub coords: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of a triangle (positive for counter-clockwise orientation).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.coords[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|i| self.coords[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Indices of nodes not on the boundary, increasing.
    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| !self.boundary[i]).collect()
    }
}

/// Triangulates `(0,width)×(0,height)` with `nx × ny` cells.
pub fn triangulate(nx: usize, ny: usize, width: f64, height: f64) -> Mesh {
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
            boundary.push(i == 0 || j == 0 || i == nx || j == ny);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    Mesh { nx, ny, coords, triangles, boundary }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_orientation() {
        let m = triangulate(2, 1, 2.0, 1.0);
        assert_eq!(m.num_nodes(), 6);
        assert_eq!(m.num_triangles(), 4);
        assert!((0..4).all(|t| m.signed_area(t) > 0.0));
        assert_eq!(m.free_nodes().len(), 0);
    }
}
