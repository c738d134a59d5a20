//! Reading (and, for fixtures, writing) MIT-BIH records in WFDB format.

mod annotation;
mod format212;
mod header;
mod record;

pub use annotation::{
    code_for_symbol, encode_annotations, is_beat_code, parse_annotation_csv, parse_annotations,
    symbol_for_code, BeatAnnotation,
};
pub use format212::{checksum, decode_format212, encode_format212, encoded_len, SAMPLE_MAX, SAMPLE_MIN};
pub use header::{
    parse_header, write_header, ChannelSpec, RecordHeader, DEFAULT_ADC_GAIN, DEFAULT_SAMPLING_RATE,
    FORMAT_212,
};
pub use record::{list_records, load_record, write_record, AnnotatedRecord, ChannelInfo, SignalRecord};
