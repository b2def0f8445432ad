// ndarray-linalg is built without a bundled LAPACK backend; link the system OpenBLAS/LAPACK.
fn main() {
    println!("cargo:rustc-link-lib=openblas");
    println!("cargo:rustc-link-lib=lapack");
}
