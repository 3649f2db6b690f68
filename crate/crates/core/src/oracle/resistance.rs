//! Electric potential in a face-matched conductor: `u = 1` on the input port,
//! `u = 0` on the output port, insulated elsewhere.

use super::{Assembly, BcData, BcKind, BcSpec, BlockSpec, Source};
use crate::error::{Error, Result};
use crate::geometry::{CompositeGeometry, Face, Port};
use crate::grid::{Field, StructuredGrid};
use crate::linalg::LinearSolverOptions;

#[derive(Debug, Clone)]
pub struct PotentialSolution {
    /// One field per box of the geometry, in geometry order.
    pub fields: Vec<Field>,
    /// Current leaving through the output port, from the discrete
    /// conservative flux (`sigma * integral du/dn` with the sign flipped).
    pub port_current: f64,
}

impl PotentialSolution {
    /// Resistance from the conservative port current.
    pub fn resistance(&self) -> Result<f64> {
        if self.port_current.abs() < 1e-14 {
            return Err(Error::ZeroFlux(self.port_current));
        }
        Ok(1.0 / self.port_current.abs())
    }
}

fn check_port(geometry: &CompositeGeometry, port: &Port, name: &str) -> Result<()> {
    if port.box_index >= geometry.boxes().len() || port.face.axis >= geometry.dim() {
        return Err(Error::Port(format!(
            "{name} port refers to a missing box or axis"
        )));
    }
    if !geometry.is_exterior_face(port.box_index, port.face) {
        return Err(Error::Port(format!(
            "{name} port (box {}, axis {}, {:?}) is an interior face",
            port.box_index, port.face.axis, port.face.side
        )));
    }
    Ok(())
}

/// Node counts giving every box a spacing close to `h`.
pub fn counts_for_spacing(geometry: &CompositeGeometry, h: f64) -> Result<Vec<Vec<usize>>> {
    geometry
        .boxes()
        .iter()
        .map(|b| StructuredGrid::with_spacing(*b, h).map(|g| g.counts().to_vec()))
        .collect()
}

/// Monolithic Laplace solve over all boxes with coincident interface nodes
/// merged. `grid_n` gives node counts per box.
pub fn solve_resistance_potential(
    geometry: &CompositeGeometry,
    in_port: Port,
    out_port: Port,
    sigma: f64,
    grid_n: &[Vec<usize>],
) -> Result<PotentialSolution> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma",
            value: sigma,
        });
    }
    check_port(geometry, &in_port, "input")?;
    check_port(geometry, &out_port, "output")?;
    if in_port == out_port {
        return Err(Error::Port("input and output ports coincide".into()));
    }
    if grid_n.len() != geometry.boxes().len() {
        return Err(Error::Shape(format!(
            "{} grid specifications for {} boxes",
            grid_n.len(),
            geometry.boxes().len()
        )));
    }
    let grids: Vec<StructuredGrid> = geometry
        .boxes()
        .iter()
        .zip(grid_n)
        .map(|(b, n)| StructuredGrid::new(*b, n))
        .collect::<Result<_>>()?;
    check_interface_nodes(geometry, &grids)?;

    let one = BcData::Constant(1.0);
    let zero = BcData::Constant(0.0);
    let mut specs = Vec::new();
    let mut data = Vec::new();
    let mut out_bc = 0;
    for (bi, b) in geometry.boxes().iter().enumerate() {
        for face in Face::all(geometry.dim()) {
            if !geometry.is_exterior_face(bi, face) {
                continue;
            }
            let port = Port {
                box_index: bi,
                face,
            };
            let (kind, d) = if port == in_port {
                (BcKind::Dirichlet, &one)
            } else if port == out_port {
                out_bc = specs.len();
                (BcKind::Dirichlet, &zero)
            } else {
                (BcKind::Neumann, &zero)
            };
            specs.push(BcSpec {
                block: bi,
                patch: b.face_patch(face),
                kind,
            });
            data.push(d);
        }
    }
    let blocks: Vec<BlockSpec> = grids
        .iter()
        .map(|g| BlockSpec {
            grid: g,
            coeff: [1.0; 3],
        })
        .collect();
    let asm = Assembly::new(&blocks, &specs, LinearSolverOptions::default())?;
    let src = Source::Constant(0.0);
    let sources = vec![&src; grids.len()];
    let u = asm.solve_global(&data, &sources)?;
    let balance = asm.balance(&u, &data, &sources);

    let out_grid = &grids[out_port.box_index];
    let out_nodes = out_grid.patch_nodes(&specs[out_bc].patch)?;
    let flux: f64 = out_nodes
        .iter()
        .map(|&i| balance[asm.block_map(out_port.box_index)[i]])
        .sum();

    let fields = asm
        .scatter(&u)
        .into_iter()
        .zip(grids)
        .map(|(v, g)| Field::new(g, v))
        .collect::<Result<_>>()?;
    Ok(PotentialSolution {
        fields,
        port_current: -sigma * flux,
    })
}

fn check_interface_nodes(geometry: &CompositeGeometry, grids: &[StructuredGrid]) -> Result<()> {
    for itf in geometry.interfaces() {
        let a = geometry.index_of(&itf.owner_a).unwrap();
        let b = geometry.index_of(&itf.owner_b).unwrap();
        let ta = grids[a].patch_shape(&itf.patch);
        let tb = grids[b].patch_shape(&itf.patch.flipped());
        let axes = itf.patch.tangential_axes();
        let same = axes.iter().all(|&k| {
            (grids[a].spacing(k) - grids[b].spacing(k)).abs() <= 1e-12 * grids[a].spacing(k)
        });
        if ta != tb || !same {
            return Err(Error::GridMismatch(format!(
                "interface between `{}` and `{}` has non-coincident nodes",
                itf.owner_a, itf.owner_b
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{decompose_l_shape, l_shape_ports, AxisBox, ShapeParams};
    use approx::assert_abs_diff_eq;

    fn bar() -> CompositeGeometry {
        CompositeGeometry::new(
            vec![AxisBox::new(&[0.0, 0.0, 0.0], &[2.0, 1.0, 1.0]).unwrap()],
            vec!["bar".into()],
        )
        .unwrap()
    }

    fn ports() -> (Port, Port) {
        (
            Port {
                box_index: 0,
                face: Face::lo(0),
            },
            Port {
                box_index: 0,
                face: Face::hi(0),
            },
        )
    }

    #[test]
    fn straight_bar_is_linear() {
        let (i, o) = ports();
        let s = solve_resistance_potential(&bar(), i, o, 1.0, &[vec![9, 3, 3]]).unwrap();
        let f = &s.fields[0];
        for (k, v) in f.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, 1.0 - f.grid.point(k)[0] / 2.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.resistance().unwrap(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn interior_port_is_rejected() {
        let g =
            decompose_l_shape(&ShapeParams::from_array([2.0, 2.0, 2.0, 5.0, 6.0, 3.0])).unwrap();
        let (i, _) = l_shape_ports();
        let inner = Port {
            box_index: 1,
            face: Face::hi(0),
        };
        let n = counts_for_spacing(&g, 0.5).unwrap();
        assert!(matches!(
            solve_resistance_potential(&g, i, inner, 1.0, &n),
            Err(Error::Port(_))
        ));
    }

    #[test]
    fn l_shape_potential_obeys_maximum_principle() {
        let g =
            decompose_l_shape(&ShapeParams::from_array([2.0, 2.0, 2.0, 5.0, 6.0, 3.0])).unwrap();
        let (i, o) = l_shape_ports();
        let n = counts_for_spacing(&g, 0.25).unwrap();
        let s = solve_resistance_potential(&g, i, o, 1.0, &n).unwrap();
        for f in &s.fields {
            for v in &f.values {
                assert!(*v >= -1e-10 && *v <= 1.0 + 1e-10);
            }
        }
        assert!(s.resistance().unwrap() > 0.0);
    }
}
