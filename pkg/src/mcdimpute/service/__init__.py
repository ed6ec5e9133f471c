"""HTTP service wrapping the imputation toolkit."""
