//! GraphViz export of a genome with neurons colored by module.

use std::fmt::Write as _;

use structevo::{best_partition, Genome};

/// DOT digraph with one `rank=same` group per layer (inputs on top), nodes
/// filled by their best-partition module and one labeled edge per
/// connection.
pub fn genome_to_dot(genome: &Genome) -> String {
    let arch = genome.arch();
    let partition = best_partition(&genome.to_graph());
    let modules = partition.module_count().max(1);
    let mut out = String::from("digraph network {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=circle, style=filled, fontname=\"Helvetica\"];\n");
    for layer in 0..arch.layer_sizes().len() {
        writeln!(out, "  subgraph layer_{layer} {{").unwrap();
        out.push_str("    rank=same;\n");
        for node in arch.layer_range(layer) {
            let module = partition.module_of()[node];
            writeln!(
                out,
                "    {} [fillcolor=\"{}\", tooltip=\"module {module}\"];",
                arch.neuron_name(node),
                module_color(module, modules)
            )
            .unwrap();
        }
        out.push_str("  }\n");
    }
    for (s, t, w) in genome.connections() {
        writeln!(out, "  {} -> {} [label=\"{w}\"];", arch.neuron_name(s), arch.neuron_name(t)).unwrap();
    }
    out.push_str("}\n");
    out
}

/// Evenly spaced hues in GraphViz's `"H S V"` notation.
pub fn module_color(module: usize, modules: usize) -> String {
    format!("{:.3} 0.450 0.950", module as f64 / modules as f64)
}
