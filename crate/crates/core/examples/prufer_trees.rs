//! Prüfer codes: decode, encode and enumerate all labeled trees.

use msbtree::trees::{enumerate_trees, prufer_decode, prufer_encode, tree_count, PruferCode};

fn main() -> msbtree::Result<()> {
    // codes are written 1-based, as on the command line
    let code = PruferCode::parse("4 4 4 5", 6)?;
    let tree = prufer_decode(&code);
    println!("code {:?} -> edges {:?}", code.one_based(), tree.edges_one_based());
    println!("degrees {:?}", tree.degrees());
    assert_eq!(prufer_encode(&tree), code);
    print!("{}", tree.to_dot());

    for s in 2..=7 {
        let n = enumerate_trees(s, 8)?.count();
        println!("s = {s}: {n} trees (s^(s-2) = {})", tree_count(s));
    }

    println!("all trees on 4 vertices:");
    for (code, tree) in enumerate_trees(4, 8)? {
        println!("  {:?}  {:?}", code.one_based(), tree.edges_one_based());
    }
    Ok(())
}
