use std::process::ExitCode;

/// Failures of a command, each tied to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dbn_ids::Error),

    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use dbn_ids::Error as E;
        match self {
            CliError::GradCheck(_) => 1,
            CliError::Core(E::Config(_)) => 2,
            CliError::Core(E::Data(_) | E::Io { .. } | E::Shape(_) | E::Domain(_) | E::Capacity(_)) => 3,
            CliError::Core(E::State(_) | E::Format(_)) => 4,
        }
    }

    pub fn to_exit_code(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        use dbn_ids::Error as E;
        let cases = [
            (CliError::Core(E::Config("x".into())), 2),
            (CliError::Core(E::Data("x".into())), 3),
            (CliError::Core(E::io("f", std::io::Error::other("x"))), 3),
            (CliError::Core(E::Shape("x".into())), 3),
            (CliError::Core(E::State("x".into())), 4),
            (CliError::Core(E::Format("x".into())), 4),
            (CliError::GradCheck("x".into()), 1),
        ];
        for (e, code) in cases {
            assert_eq!(e.exit_code(), code, "{e}");
        }
    }
}
