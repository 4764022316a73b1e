//! Random overlay generation: degree bounds, connectivity, radius and
//! articulation points, plus an edge-list export.

use blockcast::topology::{generate_topology, radius, DegreeSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> blockcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (n, lo, hi) in [(1000, 8, 12), (1000, 5, 5), (65536, 5, 5), (65536, 8, 12)] {
        let g = generate_topology(n, DegreeSpec::new(lo, hi)?, &mut rng)?;
        let r = radius(&g, 5000, 64, &mut rng)?;
        println!(
            "{n:>6} nodes, degree {lo}-{hi}: {} edges, mean degree {:.2}, radius {}{}, connected {}, cut vertices {}",
            g.edge_count(),
            g.mean_degree(),
            r.radius,
            if r.exact { "" } else { " (sampled)" },
            g.is_connected(),
            g.articulation_points().len()
        );
    }
    let small = generate_topology(12, DegreeSpec::regular(3)?, &mut rng)?;
    println!("\n12-node cubic graph, diameter {}:", small.diameter()?);
    small.write_edge_list(&mut std::io::stdout())?;
    Ok(())
}
