//! WARC/1.1 capture storage, reading and CDX indexing.

mod cdx;
mod reader;
mod record;
mod store;

pub use cdx::{
    build_index, index_file, nearest, surt_key, warc_files_in, CdxEntry, CdxError, CdxIndex,
};
pub use reader::{read_record_at, read_records, CaptureRecord, ReadError, WarcReader};
pub use record::{
    sha1_digest, HttpMessage, RecordKind, WarcHeaders, WarcRecord, FIRST_OBSERVED_FIELD,
    WARC_VERSION,
};
pub use store::{Provenance, StoreConfig, StoreError, WarcStore, DEFAULT_ROLLOVER_BYTES};
