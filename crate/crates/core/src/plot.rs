//! Planar SVG rendering of a trajectory and the zero level sets of the
//! barriers. Output depends only on the inputs, so equal inputs give equal
//! bytes.

use std::fmt::Write;

use nalgebra::DVector;

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::feasible_map::SafetySpec;
use crate::simulator::Trajectory;

pub const LEVEL_CURVE_POINTS: usize = 256;
const SIZE: f64 = 600.0;
const PAD: f64 = 0.08;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub const PLANAR_ONLY: &str = "plot supports planar scenarios only";

struct View {
    lo: [f64; 2],
    scale: f64,
}

impl View {
    fn px(&self, p: &DVector<f64>) -> (f64, f64) {
        (
            (p[0] - self.lo[0]) * self.scale,
            SIZE - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

fn points_attr(view: &View, pts: &[DVector<f64>]) -> String {
    let mut s = String::new();
    for (k, p) in pts.iter().enumerate() {
        let (x, y) = view.px(p);
        if k > 0 {
            s.push(' ');
        }
        write!(s, "{x:.3},{y:.3}").expect("write to string");
    }
    s
}

fn level_curve(h: &Barrier, lo: [f64; 2], hi: [f64; 2]) -> Vec<DVector<f64>> {
    match h {
        Barrier::Quadratic(q) => (0..=LEVEL_CURVE_POINTS)
            .map(|k| {
                let t = std::f64::consts::TAU * (k % LEVEL_CURVE_POINTS) as f64 / LEVEL_CURVE_POINTS as f64;
                q.center() + q.sphere_map() * DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        Barrier::Affine(a) => {
            // the line aᵀx = b through the viewport
            let nrm = a.normal().norm();
            let n = a.normal() / nrm;
            let foot = &n * (a.offset() / nrm);
            let dir = DVector::from_vec(vec![-n[1], n[0]]);
            let half = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
            let mid = DVector::from_vec(vec![(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0]);
            let base = &foot + &dir * dir.dot(&(mid - &foot));
            (0..LEVEL_CURVE_POINTS)
                .map(|k| {
                    let s = -half + 2.0 * half * k as f64 / (LEVEL_CURVE_POINTS - 1) as f64;
                    &base + &dir * s
                })
                .collect()
        }
    }
}

/// SVG with one closed polyline per barrier, the trajectory polyline, and
/// start and end markers.
pub fn render_svg(spec: &SafetySpec, traj: &Trajectory) -> Result<String> {
    if spec.state_dim() != 2 {
        return Err(Error::InvalidParameter(PLANAR_ONLY.into()));
    }
    if traj.is_empty() {
        return Err(Error::InvalidParameter("trajectory is empty".into()));
    }
    if let Some(x) = traj.states.iter().find(|x| x.len() != 2) {
        return Err(Error::dims("trajectory state", 2, x.len()));
    }

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |p: &DVector<f64>| {
        for j in 0..2 {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    };
    traj.states.iter().for_each(&mut grow);
    for h in spec.barriers() {
        if let Some((l, u)) = h.bounding_box() {
            grow(&l);
            grow(&u);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    for j in 0..2 {
        let mid = (lo[j] + hi[j]) / 2.0;
        lo[j] = mid - span * (0.5 + PAD);
        hi[j] = mid + span * (0.5 + PAD);
    }
    let view = View {
        lo,
        scale: SIZE / (span * (1.0 + 2.0 * PAD)),
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .expect("write to string");
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).expect("write to string");
    for (i, h) in spec.barriers().iter().enumerate() {
        let pts = level_curve(h, lo, hi);
        writeln!(
            svg,
            r#"<polyline class="barrier" id="h{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            i + 1,
            COLORS[i % COLORS.len()],
            points_attr(&view, &pts)
        )
        .expect("write to string");
    }
    writeln!(
        svg,
        r#"<polyline class="trajectory" fill="none" stroke="black" stroke-width="1" points="{}"/>"#,
        points_attr(&view, &traj.states)
    )
    .expect("write to string");
    let marker = |svg: &mut String, class: &str, color: &str, p: &DVector<f64>| {
        let (x, y) = view.px(p);
        writeln!(
            svg,
            r#"<circle class="{class}" cx="{x:.3}" cy="{y:.3}" r="4" fill="{color}"/>"#
        )
        .expect("write to string");
    };
    marker(&mut svg, "start", "#2ca02c", &traj.states[0]);
    marker(&mut svg, "end", "#d62728", traj.states.last().expect("nonempty"));
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{AlphaFunction, SystemDynamics};
    use crate::geometry::Polytope;
    use crate::policy::Policy;
    use crate::simulator::{simulate, SimConfig};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn points(svg: &str, class: &str) -> Vec<(f64, f64)> {
        let tag = format!(r#"class="{class}""#);
        let line = svg.lines().find(|l| l.contains(&tag)).unwrap();
        let attr = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        attr.split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn two_disk_plot_contains_path() {
        let spec = SafetySpec::new(
            vec![
                Barrier::disk(v(&[-0.5, 0.0]), 1.0).unwrap(),
                Barrier::disk(v(&[0.5, 0.0]), 1.0).unwrap(),
            ],
            vec![AlphaFunction::linear(1.0).unwrap(); 2],
            Polytope::box_input(2, 1.0).unwrap(),
        )
        .unwrap();
        let sys = SystemDynamics::single_integrator(2).unwrap();
        let p = Policy::LpVertex { cost: v(&[1.0, -1.0]) };
        let (traj, _) = simulate(&spec, &sys, &p, &v(&[0.1, 0.1]), &SimConfig::new(1e-2, 2.0, 0.1)).unwrap();
        let svg = render_svg(&spec, &traj).unwrap();
        assert_eq!(svg, render_svg(&spec, &traj).unwrap());
        assert_eq!(svg.matches(r#"class="barrier""#).count(), 2);

        let path = points(&svg, "trajectory");
        assert_eq!(path.len(), traj.len());
        // every path vertex lies inside the pixel extents of both circles
        for class_id in ["h1", "h2"] {
            let line = svg
                .lines()
                .find(|l| l.contains(&format!(r#"id="{class_id}""#)))
                .unwrap();
            let circle: Vec<(f64, f64)> = line
                .split("points=\"")
                .nth(1)
                .unwrap()
                .split('"')
                .next()
                .unwrap()
                .split(' ')
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect();
            assert_eq!(circle.len(), LEVEL_CURVE_POINTS + 1);
            let (x0, x1) = circle
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
            let (y0, y1) = circle
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
            assert!(path.iter().all(|p| p.0 >= x0 && p.0 <= x1 && p.1 >= y0 && p.1 <= y1));
        }
    }

    #[test]
    fn rejects_non_planar() {
        let spec = SafetySpec::new(
            vec![Barrier::disk(v(&[0.0]), 1.0).unwrap()],
            vec![AlphaFunction::linear(1.0).unwrap()],
            Polytope::box_input(1, 1.0).unwrap(),
        )
        .unwrap();
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![v(&[0.0])],
            ..Default::default()
        };
        let err = render_svg(&spec, &traj).unwrap_err();
        assert!(err.to_string().contains(PLANAR_ONLY));
    }
}
