//! Axis-aligned BVH over a world-space triangle soup with Moller-Trumbore
//! intersection. Built once per placed mesh and shared read-only across
//! frames and threads.

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
    /// Barycentric coordinates of the second and third vertices.
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    fn centroid(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    /// Slab test; returns true when the ray overlaps [t_min, t_max].
    fn hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        let mut lo = t_min;
        let mut hi = t_max;
        for axis in 0..3 {
            let inv = 1.0 / ray.direction[axis];
            let mut t0 = (self.min[axis] - ray.origin[axis]) * inv;
            let mut t1 = (self.max[axis] - ray.origin[axis]) * inv;
            if inv < 0.0 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if hi < lo {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        count: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

/// Triangle vertices flattened for intersection.
#[derive(Debug, Clone, Copy)]
pub struct BvhTriangle {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub c: Vector3<f64>,
    /// Index into the owning mesh's triangle list.
    pub id: usize,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    triangles: Vec<BvhTriangle>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mut triangles: Vec<BvhTriangle>) -> Self {
        let mut nodes = Vec::new();
        if triangles.is_empty() {
            nodes.push(Node::Leaf {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            return Self { nodes, triangles };
        }
        let len = triangles.len();
        build_recursive(&mut triangles, 0, len, &mut nodes);
        Self { nodes, triangles }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Nearest intersection with `t` in `(t_min, t_max)`.
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.triangles.is_empty() {
            return None;
        }
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            match &self.nodes[idx] {
                Node::Leaf {
                    bounds,
                    start,
                    count,
                } => {
                    if !bounds.hit(ray, t_min, limit) {
                        continue;
                    }
                    for tri in &self.triangles[*start..*start + *count] {
                        if let Some(hit) = intersect_triangle(ray, tri, t_min, limit) {
                            limit = hit.t;
                            best = Some(hit);
                        }
                    }
                }
                Node::Inner {
                    bounds,
                    left,
                    right,
                } => {
                    if bounds.hit(ray, t_min, limit) {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }

    /// Any intersection in `(t_min, t_max)`; early exit for shadow rays.
    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            match &self.nodes[idx] {
                Node::Leaf {
                    bounds,
                    start,
                    count,
                } => {
                    if !bounds.hit(ray, t_min, t_max) {
                        continue;
                    }
                    for tri in &self.triangles[*start..*start + *count] {
                        if intersect_triangle(ray, tri, t_min, t_max).is_some() {
                            return true;
                        }
                    }
                }
                Node::Inner {
                    bounds,
                    left,
                    right,
                } => {
                    if bounds.hit(ray, t_min, t_max) {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        false
    }
}

fn triangle_bounds(t: &BvhTriangle) -> Aabb {
    let mut b = Aabb::empty();
    b.grow(&t.a);
    b.grow(&t.b);
    b.grow(&t.c);
    b
}

fn build_recursive(
    triangles: &mut [BvhTriangle],
    start: usize,
    count: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut centroid_bounds = Aabb::empty();
    for tri in &triangles[start..start + count] {
        let tb = triangle_bounds(tri);
        bounds.merge(&tb);
        centroid_bounds.grow(&tb.centroid());
    }
    let node_index = nodes.len();
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start,
            count,
        });
        return node_index;
    }
    // Median split along the widest centroid axis.
    let extent = centroid_bounds.max - centroid_bounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    triangles[start..start + count].select_nth_unstable_by(count / 2, |p, q| {
        let cp = triangle_bounds(p).centroid()[axis];
        let cq = triangle_bounds(q).centroid()[axis];
        cp.partial_cmp(&cq).unwrap_or(std::cmp::Ordering::Equal)
    });
    nodes.push(Node::Inner {
        bounds,
        left: 0,
        right: 0,
    });
    let left = build_recursive(triangles, start, mid - start, nodes);
    let right = build_recursive(triangles, mid, start + count - mid, nodes);
    if let Node::Inner {
        left: l, right: r, ..
    } = &mut nodes[node_index]
    {
        *l = left;
        *r = right;
    }
    node_index
}

/// Moller-Trumbore; double-sided.
pub fn intersect_triangle(ray: &Ray, tri: &BvhTriangle, t_min: f64, t_max: f64) -> Option<Hit> {
    let e1 = tri.b - tri.a;
    let e2 = tri.c - tri.a;
    let pvec = ray.direction.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - tri.a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.direction.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    if t <= t_min || t >= t_max {
        return None;
    }
    Some(Hit {
        t,
        triangle: tri.id,
        u,
        v,
    })
}
