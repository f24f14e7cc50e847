use flexquad_core::sim::{ArmParams, BodyParams, Environment, Injection, Polygon, Simulator, VehicleState};
use nalgebra::Vector3;

fn main() {
    let body = BodyParams::default();
    let env = Environment {
        obstacles: vec![Polygon::rect(0.5, -2.0, 1.5, 2.0).unwrap()],
        ..Environment::free_space()
    };
    let mut sim = Simulator::new(body, ArmParams::default(), env, VehicleState::at_rest(Vector3::zeros()), 1.0 / 500.0).unwrap();
    let f = sim.body.hover_thrust();
    let inject = Injection { com_force: Vector3::new(1.0, 0.0, 0.0), ..Default::default() };
    for k in 0..6000 {
        let out = sim.step(f, Vector3::zeros(), &inject).unwrap();
        if k % 500 == 499 {
            let yaw = sim.state.rot[(1, 0)].atan2(sim.state.rot[(0, 0)]);
            println!(
                "k={k:5} pos=({:+.4},{:+.4}) vel=({:+.3},{:+.3}) yaw={:+.4} wz={:+.3} fc=({:+.3},{:+.3}) th=[{:+.3},{:+.3},{:+.3},{:+.3}]",
                sim.state.pos.x, sim.state.pos.y, sim.state.vel.x, sim.state.vel.y, yaw, sim.state.omega.z,
                out.contact_force_world.x, out.contact_force_world.y,
                sim.state.theta[0], sim.state.theta[1], sim.state.theta[2], sim.state.theta[3]
            );
        }
    }
}
