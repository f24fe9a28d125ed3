//! Worker-pool sizing from the `EPGD_THREADS` environment variable.

pub const THREADS_ENV: &str = "EPGD_THREADS";

/// Parses a thread cap; `None` means "use rayon's default".
pub fn parse_thread_cap(value: Option<&str>) -> Result<Option<usize>, String> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            )),
            Ok(n) => Ok(Some(n)),
        },
    }
}

/// Builds the pool used for all parallel work in this process.
pub fn build_pool() -> Result<rayon::ThreadPool, String> {
    let cap = parse_thread_cap(std::env::var(THREADS_ENV).ok().as_deref())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cap {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_caps() {
        assert_eq!(parse_thread_cap(None), Ok(None));
        assert_eq!(parse_thread_cap(Some("4")), Ok(Some(4)));
        assert!(parse_thread_cap(Some("0")).is_err());
        assert!(parse_thread_cap(Some("many")).is_err());
    }
}
