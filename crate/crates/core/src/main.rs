fn main() -> std::process::ExitCode {
    spectral_percept::cli::main_entry()
}
