use flexquad_core::harness::{read_trace, run};
use flexquad_core::scenario::Scenario;

#[test]
fn probe_slip() {
    for (att, rate) in [(2.5, 0.15), (2.8, 0.15), (3.0, 0.15), (2.5, 0.12), (2.0, 0.15)] {
        let mut s = Scenario::preset("BOX_1220x1000").unwrap();
        s.duration = 30.0;
        s.gains.att_p.z = att;
        s.gains.rate_p.z = rate;
        let dir = std::env::temp_dir().join(format!("flexquad-probe-slip-{att}-{rate}"));
        let _ = std::fs::remove_dir_all(&dir);
        let art = run(&s, &dir).unwrap();
        let tr = read_trace(&art.trace_path).unwrap();

        // Straight-press window before the first corner.
        let mut max_wz_press = 0.0_f64;
        let mut held = 0usize;
        let mut n_press = 0usize;
        let mut first_turn: Option<(f64, f64)> = None;
        let mut transitions = Vec::new();
        let mut last_g = f64::NAN;
        for row in &tr.rows {
            let t = tr.col(row, "t");
            let g = tr.col(row, "gamma");
            if t >= 2.0 && t <= 4.0 {
                n_press += 1;
                max_wz_press = max_wz_press.max(tr.col(row, "wz").abs());
                if tr.col(row, "wall_fx").hypot(tr.col(row, "wall_fy")) > 0.5 {
                    held += 1;
                }
            }
            if g != last_g {
                if !last_g.is_nan() {
                    transitions.push((t, last_g as i32, g as i32, tr.col(row, "py")));
                    if g as i32 == 2 && first_turn.is_none() {
                        first_turn = Some((t, tr.col(row, "py")));
                    }
                }
                last_g = g;
            }
        }

        println!(
            "att={att:4.1} rate={rate:4.2}  press: held {held}/{n_press} max|wz|={max_wz_press:.3}  first_turn={first_turn:?}",
        );
        for (tt, a, b, y) in transitions.iter().take(12) {
            println!("    t={tt:6.2} {a} -> {b}  y={y:+.3}");
        }
        if false {
            for row in &tr.rows {
                let t = tr.col(row, "t");
                if (5.0..7.8).contains(&t) && (tr.col(row, "t") * 100.0).round() as i64 % 2 == 0 {
                    println!(
                        "    t={t:5.2} wz={:+.4} tau_ext_z={:+.4} th=[{:+.4} {:+.4} {:+.4} {:+.4}] wall=({:+.2},{:+.2})",
                        tr.col(row, "wz"), tr.col(row, "yaw_torque"),
                        tr.col(row, "th0"), tr.col(row, "th1"), tr.col(row, "th2"), tr.col(row, "th3"),
                        tr.col(row, "wall_fx"), tr.col(row, "wall_fy"),
                    );
                }
            }
        }
    }
}
