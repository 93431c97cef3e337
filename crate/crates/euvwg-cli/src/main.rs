fn main() {
    println!("euvwg");
}
