/// Per-worker running mean of observed per-packet service times, in seconds.
#[derive(Clone, Debug, Default)]
pub struct ServiceEstimator {
    count: Vec<u64>,
    mean: Vec<f64>,
}

impl ServiceEstimator {
    pub fn new(workers: usize) -> Self {
        ServiceEstimator {
            count: vec![0; workers],
            mean: vec![0.0; workers],
        }
    }

    pub fn observe(&mut self, worker: usize, sample: f64) {
        let n = &mut self.count[worker];
        *n += 1;
        self.mean[worker] += (sample - self.mean[worker]) / *n as f64;
    }

    pub fn mean(&self, worker: usize) -> Option<f64> {
        (self.count[worker] > 0).then(|| self.mean[worker])
    }

    pub fn samples(&self, worker: usize) -> u64 {
        self.count[worker]
    }
}

/// Service time of one packet as the master can infer it from its own
/// timestamps.
///
/// The worker can start a packet no earlier than one round trip after it was
/// sent, and no earlier than the moment it returned its previous result. The
/// time from the later of those to this result is the packet's service time.
pub fn service_sample(sent_at: f64, result_at: f64, prev_result_at: Option<f64>, rtt: f64) -> f64 {
    let start = match prev_result_at {
        Some(prev) => (sent_at + rtt).max(prev),
        None => sent_at + rtt,
    };
    (result_at - start).max(0.0)
}
