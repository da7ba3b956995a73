fn main() {
    std::process::exit(fairwelfare::cli::run(std::env::args_os()));
}
