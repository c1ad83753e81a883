//! A scripted teleop driver speaking the WebSocket protocol.
//!
//! Start a server, then point this at it:
//!
//!     cargo run -p lics-cli -- teleop --worlds data/worlds/test --port 8765
//!     cargo run -p lics-cli --example teleop_client -- ws://127.0.0.1:8765 [--record]
//!
//! It follows the streamed global path with pure pursuit and prints a line
//! per second until the episode ends.

use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tungstenite::Message;

fn pursue(frame: &Value) -> (f64, f64) {
    let f = |v: &Value| v.as_f64().unwrap_or(0.0);
    let pose = &frame["pose"];
    let (x, y, th) = (f(&pose[0]), f(&pose[1]), f(&pose[2]));
    let path = frame["path"].as_array().cloned().unwrap_or_default();
    // first path point at least 0.3 m away, else the goal
    let target = path
        .iter()
        .map(|p| (f(&p[0]), f(&p[1])))
        .find(|(px, py)| (px - x).hypot(py - y) >= 0.3)
        .unwrap_or((f(&frame["goal"][0]), f(&frame["goal"][1])));
    let (dx, dy) = (target.0 - x, target.1 - y);
    let bearing = (dy.atan2(dx) - th + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    let v = 0.4 * bearing.cos().max(0.0).powi(2);
    (v, (2.5 * bearing).clamp(-2.0, 2.0))
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let url = args.next().unwrap_or_else(|| "ws://127.0.0.1:8765".into());
    let record = args.any(|a| a == "--record");

    let (mut ws, _) = tungstenite::connect(url.as_str())?;
    let hello: Value = match ws.read()? {
        Message::Text(t) => serde_json::from_str(&t)?,
        other => anyhow::bail!("expected hello, got {other:?}"),
    };
    println!("driving {} (worlds: {})", hello["world"], hello["worlds"]);
    if record {
        ws.send(Message::text(json!({"type": "record", "on": true}).to_string()))?;
    }

    let mut last_print = Instant::now() - Duration::from_secs(1);
    loop {
        let frame: Value = match ws.read()? {
            Message::Text(t) => serde_json::from_str(&t)?,
            Message::Close(_) => break,
            _ => continue,
        };
        match frame["type"].as_str() {
            Some("state") => {}
            Some("error") => anyhow::bail!("server error: {}", frame["message"]),
            _ => continue,
        }
        if !frame["outcome"].is_null() {
            println!("episode ended: {} after {:.1} s", frame["outcome"], frame["episode_t"].as_f64().unwrap_or(0.0));
            break;
        }
        let (v, w) = pursue(&frame);
        ws.send(Message::text(json!({"type": "cmd", "v": v, "w": w}).to_string()))?;
        if last_print.elapsed() >= Duration::from_secs(1) {
            last_print = Instant::now();
            println!(
                "t {:5.1}  pose ({:5.2}, {:5.2})  cmd ({v:4.2}, {w:5.2})  verdict {} {}",
                frame["episode_t"].as_f64().unwrap_or(0.0),
                frame["pose"][0].as_f64().unwrap_or(0.0),
                frame["pose"][1].as_f64().unwrap_or(0.0),
                frame["verdict"]["class"],
                if frame["verdict"]["safe"] == true { "safe" } else { "UNSAFE" },
            );
        }
    }
    ws.close(None).ok();
    Ok(())
}
