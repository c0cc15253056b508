//! C ABI surface; filled in once the solver API is final.
