//! Multiplication and allocation accounting.

/// Counters for one instrumented scope (one memory read, one frame of a
/// streaming loop, one benchmark point).
///
/// `multiplications` counts scalar multiplications of the attributed matrix
/// products, the unit the closed-form cost model is stated in.
/// `peak_transient_floats` tracks the high-water mark of floats allocated
/// for intermediates within the scope; `persistent_floats` records the size
/// of long-lived memory state observed during the scope. All three are
/// monotone while the scope runs; call [`OpCounters::reset`] between scopes.
///
/// One instance per scope; counters are not meant to be shared across
/// threads.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCounters {
    multiplications: u64,
    live_transient_floats: u64,
    peak_transient_floats: u64,
    persistent_floats: u64,
}

impl OpCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn multiplications(&self) -> u64 {
        self.multiplications
    }

    pub fn peak_transient_floats(&self) -> u64 {
        self.peak_transient_floats
    }

    pub fn persistent_floats(&self) -> u64 {
        self.persistent_floats
    }

    /// Zero every counter, starting a fresh instrumented scope.
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub(crate) fn record_mults(&mut self, count: u64) {
        self.multiplications += count;
    }

    pub(crate) fn record_transient_alloc(&mut self, floats: u64) {
        self.live_transient_floats += floats;
        if self.live_transient_floats > self.peak_transient_floats {
            self.peak_transient_floats = self.live_transient_floats;
        }
    }

    #[allow(dead_code)]
    pub(crate) fn record_transient_free(&mut self, floats: u64) {
        self.live_transient_floats = self.live_transient_floats.saturating_sub(floats);
    }

    /// Record the current size of persistent memory state. Keeps the
    /// maximum seen so the counter stays monotone within the scope.
    pub fn record_persistent(&mut self, floats: u64) {
        if floats > self.persistent_floats {
            self.persistent_floats = floats;
        }
    }
}
