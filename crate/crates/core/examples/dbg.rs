use ribbon_derham::cohomology::*;
use ribbon_derham::expr::*;
use ribbon_derham::geometry::*;
use ribbon_derham::corpus;

fn main() {
    let pp = corpus::punctured_plane().region;
    let rs = pp.ribbons();
    // left-assoc node 2: cover = [upper u lower, strip_left]
    let ab = Region::from_ribbons(2, vec![rs[0].clone(), rs[1].clone()]);
    let c_left = Region::single(rs[2].clone());
    let bump = region_bump(&c_left, 1).unwrap();
    println!("bump C_left: {}", bump);
    for i in 0..2 {
        let (d, _) = differentiate(&bump, i);
        println!("d{} bump: {}", i + 1, d);
        for (px, py) in [(-1e-6, 0.5), (1e-6, 0.5), (-2.0, -1.0-1e-6), (-2.0, -1.0+1e-6)] {
            println!("  at ({px},{py}): {:?}", d.eval(&[px, py]));
        }
    }
    match partition_of_unity(&[ab.clone(), c_left.clone()], 1, &PartitionOpts::default()) {
        Ok(_) => println!("partition ok"),
        Err(e) => println!("partition error: {e}"),
    }
}
