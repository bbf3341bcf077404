//! Data ingestion and synthesis.

mod gaussian;
mod predicate;
mod table;

pub use gaussian::{
    add_noise, rng_from_seed, sample_gaussian, CovarianceSpecFile, GaussianMixture, GaussianSpec,
    SeededRng, PIVOT_TOL,
};
pub use predicate::{Atom, CmpOp, Literal, Predicate};
pub use table::{
    filter_rows, load_csv, matrix_table, numeric_matrix, read_csv, save_csv, write_csv, Column,
    ColumnData, Encoding, Table,
};
