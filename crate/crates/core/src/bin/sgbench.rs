fn main() {
    std::process::exit(semigroup_bench::cli::main_with_args(std::env::args_os()));
}
