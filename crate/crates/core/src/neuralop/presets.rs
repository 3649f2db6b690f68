//! Named network/dataset setups at desk scale.
//!
//! Published setups were trained on tens of thousands of samples for
//! millions of steps. The `-desk` presets divide hidden widths, sample
//! counts and iteration counts by 16. Square sensor grids shrink by four per
//! side (625 = 25^2 becomes 36 = 6^2, 441 = 21^2 becomes 25, 1369 = 37^2
//! becomes 81); small inputs such as shape parameters keep their width.

use super::{Architecture, Fusion};

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub architecture: Architecture,
    pub samples: usize,
    pub iterations: usize,
}

fn layers(input: usize, width: usize, depth: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(std::iter::repeat_n(width, depth))
        .collect()
}

fn net(branches: Vec<Vec<usize>>, trunk: Vec<usize>) -> Architecture {
    Architecture {
        branches,
        trunk,
        fusion: Fusion::Product,
    }
}

fn all() -> Vec<Preset> {
    let mut out = Vec::new();
    let mut add = |name: &str, architecture: Architecture, samples: usize, iterations: usize| {
        out.push(Preset {
            name: name.to_string(),
            architecture,
            samples: samples / 16,
            iterations: iterations / 16,
        })
    };
    let s1 = |w: usize, sensors: usize| net(vec![layers(sensors, w, 4); 2], layers(3, w, 4));
    add("S1-5k-desk", s1(16, 36), 5_000, 5_000_000);
    for k in [10, 20, 30, 40, 50] {
        add(&format!("S1-{k}k-desk"), s1(32, 36), k * 1000, 5_000_000);
    }
    add("S1-non-DDM-desk", s1(64, 81), 50_000, 3_000_000);
    add("S1-DDM-half-desk", s1(64, 81), 50_000, 3_000_000);
    for sub in [
        "S1-D-R-[0,1]",
        "S1-D-R-[1,2]",
        "S1-D-D-[0,1.25]",
        "S1-D-D-[0.75,2]",
    ] {
        add(&format!("{sub}-desk"), s1(32, 36), 30_000, 5_000_000);
    }
    add("S1-D-D-two-in-one-desk", s1(32, 36), 60_000, 5_000_000);

    let shape = |w: usize, traces: usize| {
        let mut b = vec![vec![9, w]];
        b.extend(std::iter::repeat_n(layers(25, w, 4), traces));
        net(b, layers(3, w, 4))
    };
    for sub in ["sub1", "sub2", "sub3"] {
        add(
            &format!("L-shape-{sub}-desk"),
            shape(32, 2),
            50_000,
            5_000_000,
        );
    }
    add("T-shape-sub1-desk", shape(64, 2), 50_000, 5_000_000);
    add("T-shape-sub2-desk", shape(64, 3), 50_000, 5_000_000);
    add("T-shape-sub3-desk", shape(64, 2), 50_000, 4_000_000);
    add("T-shape-sub4-desk", shape(64, 2), 50_000, 5_000_000);
    add("merge-sub1-desk", shape(64, 2), 100_000, 5_000_000);
    add("merge-sub3-desk", shape(64, 2), 100_000, 5_000_000);
    add("merge-L-shape-sub2-desk", shape(64, 2), 50_000, 5_000_000);

    let pipe = |w: usize, second: Option<usize>| {
        let mut b = vec![vec![6, w], layers(40, w, 3)];
        if let Some(s) = second {
            b.push(layers(s, w, 3));
        }
        net(b, layers(2, w, 3))
    };
    add(
        "pipe-non-overlap-sub1-desk",
        pipe(8, Some(40)),
        3428,
        200_000,
    );
    add(
        "pipe-non-overlap-sub2-desk",
        pipe(8, Some(40)),
        3428,
        200_000,
    );
    add("pipe-non-overlap-sub3-desk", pipe(8, None), 3428, 200_000);
    add("pipe-overlap-sub1-desk", pipe(32, Some(1)), 3428, 200_000);
    add("pipe-overlap-sub2-desk", pipe(32, Some(1)), 3428, 200_000);

    let dd = |inputs: &[usize]| {
        net(
            inputs.iter().map(|&i| layers(i, 32, 3)).collect(),
            layers(2, 32, 3),
        )
    };
    add(
        "drift-diffusion-sub1-desk",
        dd(&[9, 11, 2]),
        85_000,
        5_000_000,
    );
    add(
        "drift-diffusion-sub2-desk",
        dd(&[5, 11, 11, 2]),
        85_000,
        5_000_000,
    );
    add(
        "drift-diffusion-sub3-desk",
        dd(&[4, 11, 11, 2]),
        85_000,
        500_000,
    );
    add(
        "drift-diffusion-sub4-desk",
        dd(&[4, 11, 11, 2]),
        85_000,
        1_000_000,
    );
    add(
        "drift-diffusion-sub5-desk",
        dd(&[4, 11, 2]),
        85_000,
        5_000_000,
    );

    let mm = |a: usize, b: usize| net(vec![layers(a, 16, 3), layers(b, 16, 3)], layers(3, 16, 3));
    add(
        "multimedium-framework2-sub1-desk",
        mm(5, 49),
        10_000,
        500_000,
    );
    add(
        "multimedium-framework2-sub2-desk",
        mm(5, 49),
        10_000,
        500_000,
    );
    add(
        "multimedium-iteration-free-sub1-desk",
        mm(2, 4),
        10_000,
        500_000,
    );
    add(
        "multimedium-iteration-free-sub2-desk",
        mm(2, 4),
        10_000,
        500_000,
    );
    out
}

pub fn preset_names() -> Vec<String> {
    all().into_iter().map(|p| p.name).collect()
}

pub fn preset(name: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.name == name)
}
