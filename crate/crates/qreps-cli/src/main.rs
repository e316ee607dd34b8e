fn main() {
    println!("qreps");
}
