#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use crystal_evolve::graph::{build_graph, CrystalGraph, GraphConfig};
use crystal_evolve::{AtomSite, Cell, CrystalStructure, Element};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cell(rng: &mut ChaCha8Rng, len: std::ops::Range<f64>) -> Cell {
    loop {
        let cell = Cell {
            a: rng.random_range(len.clone()),
            b: rng.random_range(len.clone()),
            c: rng.random_range(len.clone()),
            alpha: rng.random_range(60.0..120.0),
            beta: rng.random_range(60.0..120.0),
            gamma: rng.random_range(60.0..120.0),
        };
        if cell.volume_factor() > 0.2 {
            return cell;
        }
    }
}

pub fn random_structure(rng: &mut ChaCha8Rng, max_atoms: usize, len: std::ops::Range<f64>) -> CrystalStructure {
    let n = rng.random_range(1..=max_atoms);
    let palette = ["C", "N", "O", "Zn", "Mg", "Se", "Sn", "Cu"];
    let sites = (0..n)
        .map(|_| {
            let el = Element::from_symbol(palette[rng.random_range(0..palette.len())]).unwrap();
            AtomSite::new(el, [rng.random(), rng.random(), rng.random()])
        })
        .collect();
    CrystalStructure::new(format!("r{}", rng.random::<u32>()), random_cell(rng, len), sites)
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_atoms: usize) -> CrystalGraph {
    loop {
        let s = random_structure(rng, max_atoms, 3.5..6.0);
        if let Ok(g) = build_graph(&s, &GraphConfig::default()) {
            return g;
        }
    }
}

/// Central-difference derivative of the batch MSE with respect to one
/// parameter coordinate, computed only through `forward`.
pub fn central_difference(
    model: &crystal_evolve::SurrogateModel,
    batch: &[(&CrystalGraph, f64)],
    tensor: usize,
    index: usize,
    h: f64,
) -> f64 {
    let loss = |m: &crystal_evolve::SurrogateModel| {
        batch
            .iter()
            .map(|(g, y)| {
                let r = m.forward(g).unwrap() - y;
                r * r
            })
            .sum::<f64>()
            / batch.len() as f64
    };
    let mut plus = model.clone();
    plus.params.tensors_mut()[tensor].data[index] += h;
    let mut minus = model.clone();
    minus.params.tensors_mut()[tensor].data[index] -= h;
    (loss(&plus) - loss(&minus)) / (2.0 * h)
}

/// Relative error with a 1e-7 absolute floor.
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= 1e-7 {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Picks `count` parameter coordinates, one tensor uniformly at random and
/// then one entry; embedding rows are restricted to elements present in `graphs`.
pub fn random_coordinates(
    model: &crystal_evolve::SurrogateModel,
    graphs: &[&CrystalGraph],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let tensors = model.params.tensors();
    let mut zs: Vec<usize> = graphs.iter().flat_map(|g| g.atomic_numbers.iter().map(|&z| z as usize)).collect();
    zs.sort();
    zs.dedup();
    let d = model.config.embed_dim;
    (0..count)
        .map(|_| {
            let t = rng.random_range(0..tensors.len());
            let idx = if t == 0 {
                let z = zs[rng.random_range(0..zs.len())];
                (z - 1) * d + rng.random_range(0..d)
            } else {
                rng.random_range(0..tensors[t].data.len())
            };
            (t, idx)
        })
        .collect()
}

/// Smallest perpendicular width of the cell, from the Gram determinant.
pub fn min_width(cell: &Cell) -> f64 {
    let l = crystal_evolve::Lattice::from_cell(cell).unwrap();
    l.perpendicular_widths().into_iter().fold(f64::INFINITY, f64::min)
}

/// Random structure whose ±3 supercell provably covers `cutoff`.
pub fn oracle_structure(rng: &mut ChaCha8Rng, max_atoms: usize, cutoff: f64) -> CrystalStructure {
    loop {
        let s = random_structure(rng, max_atoms, 3.0..7.0);
        if 3.0 * min_width(&s.cell) >= cutoff {
            return s;
        }
    }
}

/// (i, j, image, distance) for every pair within `cutoff` over a ±3
/// supercell, by direct enumeration in Cartesian coordinates.
pub fn brute_force_pairs(s: &CrystalStructure, cutoff: f64) -> Vec<(usize, usize, [i32; 3], f64)> {
    let l = crystal_evolve::Lattice::from_cell(&s.cell).unwrap();
    let cart: Vec<[f64; 3]> = s.sites.iter().map(|x| l.frac_to_cart(x.frac)).collect();
    let mut out = Vec::new();
    for i in 0..s.sites.len() {
        for j in 0..s.sites.len() {
            for a in -3..=3 {
                for b in -3..=3 {
                    for c in -3..=3 {
                        let shift = l.frac_to_cart([a as f64, b as f64, c as f64]);
                        let d = ((0..3).map(|k| (cart[j][k] + shift[k] - cart[i][k]).powi(2)).sum::<f64>()).sqrt();
                        if d > 0.0 && d <= cutoff {
                            out.push((i, j, [a, b, c], d));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Checks `build_graph`'s edge list against the brute-force oracle.
///
/// Without truncation the edge sets must be equal. With `max_neighbors`
/// the oracle brackets each atom's k-th distance by ±1e-9 so near-ties may
/// resolve either way: edges strictly inside the bracket must be present,
/// and every present edge (or its reverse) must lie within it.
pub fn check_neighbor_oracle(s: &CrystalStructure, config: &GraphConfig) -> Result<(), String> {
    use std::collections::BTreeMap;
    let graph = build_graph(s, config).map_err(|e| e.to_string())?;
    let pairs = brute_force_pairs(s, config.cutoff);
    let mut by_key: BTreeMap<(usize, usize, [i32; 3]), f64> = BTreeMap::new();
    for &(i, j, img, d) in &pairs {
        by_key.insert((i, j, img), d);
    }
    for e in &graph.edges {
        match by_key.get(&(e.i, e.j, e.image)) {
            Some(d) if (d - e.distance).abs() <= 1e-9 => {}
            Some(d) => return Err(format!("edge {e:?}: oracle distance {d}")),
            None => return Err(format!("edge {e:?} not within cutoff in oracle")),
        }
    }
    let n = s.sites.len();
    let mut kth = vec![f64::INFINITY; n];
    for (i, k) in kth.iter_mut().enumerate() {
        let mut ds: Vec<f64> = pairs.iter().filter(|p| p.0 == i).map(|p| p.3).collect();
        ds.sort_by(f64::total_cmp);
        if ds.len() > config.max_neighbors {
            *k = ds[config.max_neighbors - 1];
        }
    }
    let present: std::collections::BTreeSet<(usize, usize, [i32; 3])> =
        graph.edges.iter().map(|e| (e.i, e.j, e.image)).collect();
    for &(i, j, img, d) in &pairs {
        if d < kth[i] - 1e-9 && !present.contains(&(i, j, img)) {
            return Err(format!("missing edge ({i}, {j}, {img:?}) at {d}"));
        }
    }
    let neg = |m: [i32; 3]| [-m[0], -m[1], -m[2]];
    for e in &graph.edges {
        let forward_ok = e.distance <= kth[e.i] + 1e-9;
        let reverse_ok = e.distance <= kth[e.j] + 1e-9 && by_key.contains_key(&(e.j, e.i, neg(e.image)));
        if !(forward_ok || reverse_ok) {
            return Err(format!("edge {e:?} beyond both endpoints' neighbor shells"));
        }
        if !present.contains(&(e.j, e.i, neg(e.image))) {
            return Err(format!("edge {e:?} has no reverse"));
        }
    }
    Ok(())
}

/// Every CIF under data/ (the hand-written corpus and the toy set).
pub fn cif_corpus() -> Vec<PathBuf> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                if p.file_name().is_some_and(|n| n != "run") {
                    walk(&p, out);
                }
            } else if p.extension().is_some_and(|e| e == "cif") {
                out.push(p);
            }
        }
    }
    let mut out = Vec::new();
    walk(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"), &mut out);
    out.sort();
    out
}
