//! A backend listener and two aggregator clients talking over TCP. Every
//! batch is acknowledged once it is in the store.

use std::error::Error;
use std::net::TcpListener;

use situfuse::aggregators::{flush, LocalStore, TcpTransport};
use situfuse::cli::serve;
use situfuse::simgen::{generate, ScenarioConfig};
use situfuse::store::Store;
use situfuse::wire::decode_records;

fn main() -> Result<(), Box<dyn Error>> {
    let scenario = generate(&ScenarioConfig {
        duration_s: 10.0,
        ..ScenarioConfig::default()
    })?;
    let mut queues: Vec<_> = Vec::new();
    for station in [scenario.truth.rsu, scenario.truth.vut] {
        let mut local = LocalStore::new();
        for b in scenario.batches.iter().filter(|b| b.meta.station == station) {
            decode_records(b)?.into_iter().for_each(|r| local.push(r));
        }
        queues.push((station, local));
    }

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let mut store = Store::open_in_memory()?;
    let report = std::thread::scope(|s| {
        let server = s.spawn(|| serve(listener, &mut store, Some(2)));
        for (station, mut local) in queues {
            s.spawn(move || {
                let queued = local.len();
                let mut link = TcpTransport::connect(addr).expect("listener is up");
                println!("station {}: {queued} records -> {:?}", station.0, flush(&mut local, station, &mut link));
            });
        }
        server.join().expect("listener thread")
    })?;
    println!("{report}");
    println!("store holds {} raw rows", store.stats()?.raw_total());
    Ok(())
}
