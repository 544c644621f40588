//! Datasets: MNIST digits and synthetic table questions.

pub mod mnist;
pub mod table;

pub use mnist::{load_mnist, load_mnist_dir, subset, Dataset, Split};
pub use table::{
    execute_program, generate_table_task, Instr, Op, Pivots, TableDataset, TableQuestion,
};
