use noisewarp::alloc_track::CountingAllocator;

// Counting allocator so `bench` can report peak allocation.
#[global_allocator]
static ALLOCATOR: CountingAllocator = CountingAllocator;

fn main() {
    std::process::exit(noisewarp_cli::cli_main(std::env::args().collect()));
}
