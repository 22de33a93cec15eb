//! Writes and reads an array bundle: a JSON manifest plus little-endian binary blobs.

use anyhow::Result;
use lmala::io::{ArrayBundle, MANIFEST};
use lmala::numerics::{ComplexArray, RealArray};
use num_complex::Complex64;

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let mut b = ArrayBundle::new();
    b.insert_real("image", RealArray::from_fn(&[4, 4], |i| i as f64 / 15.0))?;
    b.insert_complex("kspace", ComplexArray::from_fn(&[2, 4, 4], |i| Complex64::new(i as f64, -(i as f64))))?;
    b.insert_bool("mask", vec![4], vec![true, false, true, true])?;
    b.set_meta("note", &"written by the bundle_io example")?;
    b.write(dir.path())?;

    println!("{}:", MANIFEST);
    println!("{}", std::fs::read_to_string(dir.path().join(MANIFEST))?);
    let back = ArrayBundle::read(dir.path())?;
    println!("arrays {:?}", back.names().collect::<Vec<_>>());
    assert_eq!(back.real("image")?, b.real("image")?);
    assert_eq!(back.complex("kspace")?, b.complex("kspace")?);
    println!("round trip is bitwise exact; note = {:?}", back.meta::<String>("note")?);
    Ok(())
}
