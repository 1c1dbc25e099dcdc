//! Models behind the linguistic annotation backend.
//!
//! * [`corpus`]: uploaded speech and parallel-text data.
//! * [`dsp`]: log-mel features for the acoustic model.
//! * [`ctc`]: a small recurrent phoneme recognizer trained with CTC.
//! * [`align`]: IBM Model 1/2 word alignment and symmetrization.
//! * [`gloss`]: phrase extraction and ranked gloss suggestions.
//! * [`artifact`]: versioned on-disk model format.
//! * [`synth`]: synthetic tone corpora for smoke tests.

pub mod align;
pub mod artifact;
pub mod corpus;
pub mod ctc;
pub mod dsp;
pub mod gloss;
pub mod synth;
