//! Prints the tensor shapes flowing through encoders, decoder and the
//! multi-scale discriminator, plus parameter counts per network.
//!
//! ```bash
//! cargo run --release --example architecture_shapes -- 64
//! ```

use std::collections::BTreeMap;

use ssit::networks::{init_params, ArchConfig, Domain, Model, Trainable};
use ssit::tensor::{Graph, Tensor};

fn main() -> ssit::Result<()> {
    let size: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let arch = ArchConfig::for_size(size);
    let params = init_params::<f32>(&arch, 0)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (name, t) in params.iter() {
        let net: Vec<&str> = name.splitn(3, '.').take(2).collect();
        *counts.entry(net.join(".")).or_default() += t.len();
    }
    for (net, n) in &counts {
        println!("{net:<10} {n:>10} parameters");
    }
    println!("total      {:>10}", params.scalar_count());

    let g = Graph::new();
    let model = Model::bind(&g, &params, &arch, Trainable::Nothing);
    let x = g.constant(Tensor::zeros([1, 3, size, size]));
    let c = model.content_encode(Domain::One, x)?;
    let s = model.style_encode(Domain::Two, x)?;
    println!("image          {:?}", x.shape());
    println!("content code   {:?}", c.0.shape());
    println!("style code     {:?}", s.0.shape());
    println!("AdaIN params   {:?}", model.mlp_adain_params(Domain::Two, s)?.shape());
    println!("decoded        {:?}", model.decode(Domain::Two, c, s)?.shape());
    for (k, map) in model.discriminate(Domain::Two, x)?.maps.iter().enumerate() {
        println!("disc scale {k}   {:?}", map.shape());
    }
    Ok(())
}
