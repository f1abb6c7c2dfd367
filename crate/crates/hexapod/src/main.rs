fn main() {
    println!("hexapod");
}
