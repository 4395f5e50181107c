// Encode protocol messages, inspect the frame bytes, and show the errors a
// reader gets for damaged input.
//
// ```bash
// cargo run --example wire_codec
// ```

use fedcost::transport::{decode, decode_all, encode, Message, HEADER_LEN};
use fedcost::ParamVector;

pub fn run_example() -> fedcost::Result<()> {
    let messages = vec![
        Message::Join {
            client_id: 4,
            sample_count: 21,
        },
        Message::GlobalModel {
            round: 0,
            params: ParamVector::new(vec![0.5, -0.25])?,
        },
        Message::Update {
            round: 0,
            client_id: 4,
            sample_count: 21,
            cost: 0.42,
            params: ParamVector::new(vec![0.49, -0.2])?,
        },
        Message::Shutdown,
    ];

    let mut stream = Vec::new();
    for msg in &messages {
        let frame = encode(msg);
        println!(
            "{:<12} {:>3} bytes  header {:02x?}",
            msg.kind(),
            frame.len(),
            &frame[..HEADER_LEN]
        );
        stream.extend_from_slice(&frame);
    }
    assert_eq!(decode_all(&stream)?, messages);
    println!(
        "decoded {} frames from one {}-byte stream",
        messages.len(),
        stream.len()
    );

    let frame = encode(&messages[2]);
    println!(
        "truncated: {}",
        decode(&frame[..frame.len() - 3]).unwrap_err()
    );
    let mut bad = frame.clone();
    bad[4] = 0x07;
    println!("version:   {}", decode(&bad).unwrap_err());
    let mut bad = frame;
    bad[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
    println!("oversize:  {}", decode(&bad).unwrap_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedcost::Result<()> {
    run_example()
}
