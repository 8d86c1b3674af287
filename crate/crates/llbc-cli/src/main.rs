fn main() {
    // Wired up once the pipeline lands.
}
