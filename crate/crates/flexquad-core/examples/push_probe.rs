use flexquad_core::harness;
use flexquad_core::scenario::parse_scenario;

fn main() {
    let s = parse_scenario("environment = WALL_PUSH\n").unwrap();
    let dir = std::env::temp_dir().join("flexquad-push-probe");
    let _ = std::fs::remove_dir_all(&dir);
    let art = harness::run(&s, &dir).unwrap();
    let trace = harness::read_trace(&art.trace_path).unwrap();
    let n = trace.rows.len();
    for (i, row) in trace.rows.iter().enumerate() {
        if i % 25 != 0 && i + 1 != n {
            continue;
        }
        let t = trace.col(row, "t");
        let yaw = trace.col(row, "r10").atan2(trace.col(row, "r00"));
        println!(
            "t={:6.2} yaw={:+.5} wz={:+.5} tau_z={:+.5} wall_tau={:+.5} th=({:+.3},{:+.3}) wall=({:+.3},{:+.3}) fused_y={:+.3} py={:+.4}",
            t,
            yaw,
            trace.col(row, "wz"),
            trace.col(row, "tau_z"),
            trace.col(row, "yaw_torque"),
            trace.col(row, "th1"),
            trace.col(row, "th2"),
            trace.col(row, "wall_fx"),
            trace.col(row, "wall_fy"),
            trace.col(row, "fused_y"),
            trace.col(row, "py"),
        );
    }
    println!("{}", art.report);
}
