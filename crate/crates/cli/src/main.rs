fn main() {
    println!("ldc");
}
