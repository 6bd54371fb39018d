fn main() {
    std::process::exit(mec_offload::cli::dispatch(std::env::args_os()));
}
