//! File formats: benchmark annotations in, reports and interchange files out.

pub mod container;
pub mod culane;
pub mod report;
pub mod tusimple;

pub use container::{read_embedding, read_instances, read_mask, write_embedding, write_instances, write_mask};
pub use culane::{
    format_lines, lines_path, load_frame, parse_culane, parse_lines, read_lines_file, write_lines, CategoryMap,
    DatasetManifest, LoadedFrame, ManifestEntry, MissingPrediction,
};
pub use report::{render_table, report_from_json, report_to_json, tusimple_row, write_report};
pub use tusimple::{
    format_tusimple_record, pair_tusimple, parse_tusimple, read_tusimple, write_tusimple_record, TuSimpleReader,
    TuSimpleRecord,
};
