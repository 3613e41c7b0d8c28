use std::path::Path;

use ethical_fibers::parse_and_validate;
use ethical_fibers::scenarios::run_slavery_eras;
use ethical_fibers::transition::project_trace;

fn main() {
    let cfg = parse_and_validate(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/slavery.cfg")).unwrap();
    let trace = run_slavery_eras(&cfg).unwrap();
    println!("path: {:?}", project_trace(&trace));
    for r in &trace {
        println!(
            "{} {}  λ={:.2}  duty share {:.3}  slave sugar traded {:.3}  stranded {:.2}",
            r.t,
            r.y_id,
            r.lambda,
            r.duty_share,
            r.volume_of("sugar_slave").unwrap(),
            r.stranded.iter().fold(0.0, |t, s| t + s.quantity)
        );
    }
}
