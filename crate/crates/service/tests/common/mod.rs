#![allow(dead_code)]

use std::time::{Duration, Instant};

use lab_core::corpus::ManifestEntry;
use lab_core::synth::ToneSpec;
use lab_service::registry::{JobState, Registry, TrainingJob};

pub const TOY_SOURCE: &str = "das Haus\ndas Buch\nein Buch\n";
pub const TOY_TARGET: &str = "the house\nthe book\na book\n";

pub fn tone_entries(count: usize, seed: u64) -> Vec<ManifestEntry> {
    ToneSpec::default().manifest(count, seed)
}

pub fn small_ctc(epochs: usize) -> serde_json::Value {
    serde_json::json!({ "hidden_size": 12, "epochs": epochs })
}

pub fn wait_terminal(registry: &Registry, job_id: &str, limit: Duration) -> TrainingJob {
    let start = Instant::now();
    loop {
        let job = registry.get_job(job_id).unwrap();
        if job.state.is_terminal() {
            return job;
        }
        assert!(start.elapsed() < limit, "job {job_id} still {:?}", job.state);
        std::thread::sleep(Duration::from_millis(10));
    }
}

pub fn wait_state(registry: &Registry, job_id: &str, state: JobState, limit: Duration) {
    let start = Instant::now();
    while registry.get_job(job_id).unwrap().state != state {
        assert!(start.elapsed() < limit, "job {job_id} never reached {state:?}");
        std::thread::sleep(Duration::from_millis(5));
    }
}
