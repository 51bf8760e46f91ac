//! Observation shards and their manifest.
//!
//! A shard is a little-endian binary file: fixed header, then fixed-size
//! records (grasp provenance, label, f32 patch). The manifest is a text file
//! mapping each object to its shard and record range, carrying the seed that
//! regenerates the object, so every label can be re-derived from provenance.

use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

use crate::collect::{GraspObservation, ObjectObservations};
use crate::error::{CoreError, Result};
use crate::objgen::ObjectKey;
use crate::physics::GraspCandidate;
use crate::render::GraspPatch;

const SHARD_MAGIC: &[u8; 8] = b"CDXSHRD1";
const SHARD_VERSION: u32 = 1;
const MANIFEST_MAGIC: &str = "condex-manifest";
const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u32,
    pub patch_size: u32,
    pub record_count: u64,
    pub config_hash: [u8; 32],
}

const HEADER_LEN: u64 = 8 + 4 + 4 + 8 + 32;

fn record_len(patch_size: usize) -> u64 {
    // category + instance + five grasp floats + label + grasp_z + pixels.
    (4 + 8 + 5 * 8 + 1 + 8) as u64 + (patch_size * patch_size * 4) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub key: ObjectKey,
    pub provenance_seed: u64,
    pub shard: usize,
    /// First record index of this object within its shard.
    pub offset: u64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub config_hash: [u8; 32],
    pub patch_size: usize,
    pub shards: Vec<String>,
    pub objects: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn total_observations(&self) -> u64 {
        self.objects.iter().map(|o| o.count).sum()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(CoreError::Format("config hash must be 64 hex chars".into()));
    }
    let mut out = [0_u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let txt = std::str::from_utf8(chunk).map_err(|_| CoreError::Format("bad hex".into()))?;
        out[i] = u8::from_str_radix(txt, 16).map_err(|_| CoreError::Format("bad hex".into()))?;
    }
    Ok(out)
}

/// Write pools (already in collection order) into shards of
/// `objects_per_shard` objects each, plus the manifest. Rewriting the same
/// pools produces byte-identical files.
pub fn write_shards(
    dir: &Path,
    pools: &[ObjectObservations],
    patch_size: usize,
    config_hash: [u8; 32],
    objects_per_shard: usize,
) -> Result<Manifest> {
    if objects_per_shard == 0 {
        return Err(CoreError::invalid("objects_per_shard must be >= 1"));
    }
    for pool in pools {
        for obs in &pool.observations {
            if obs.patch.size != patch_size {
                return Err(CoreError::invalid(format!(
                    "patch size {} in pool for {} does not match shard size {patch_size}",
                    obs.patch.size, pool.key
                )));
            }
        }
    }
    fs::create_dir_all(dir)?;

    let mut manifest = Manifest {
        config_hash,
        patch_size,
        shards: Vec::new(),
        objects: Vec::new(),
    };
    for (shard_idx, chunk) in pools.chunks(objects_per_shard).enumerate() {
        let name = format!("shard_{shard_idx:04}.bin");
        let records: u64 = chunk.iter().map(|p| p.observations.len() as u64).sum();
        let mut buf: Vec<u8> = Vec::with_capacity((HEADER_LEN + records * record_len(patch_size)) as usize);
        buf.extend_from_slice(SHARD_MAGIC);
        buf.extend_from_slice(&SHARD_VERSION.to_le_bytes());
        buf.extend_from_slice(&(patch_size as u32).to_le_bytes());
        buf.extend_from_slice(&records.to_le_bytes());
        buf.extend_from_slice(&config_hash);
        let mut offset = 0_u64;
        for pool in chunk {
            manifest.objects.push(ManifestEntry {
                key: pool.key,
                provenance_seed: pool.provenance_seed,
                shard: shard_idx,
                offset,
                count: pool.observations.len() as u64,
            });
            for obs in &pool.observations {
                write_record(&mut buf, obs);
            }
            offset += pool.observations.len() as u64;
        }
        fs::write(dir.join(&name), &buf)?;
        manifest.shards.push(name);
    }

    let mut text = String::new();
    text.push_str(&format!("{MANIFEST_MAGIC} {MANIFEST_VERSION}\n"));
    text.push_str(&format!("config {}\n", hex(&config_hash)));
    text.push_str(&format!("patch_size {patch_size}\n"));
    for (i, name) in manifest.shards.iter().enumerate() {
        text.push_str(&format!("shard {i} {name}\n"));
    }
    for e in &manifest.objects {
        text.push_str(&format!(
            "object {} {} {} {} {} {}\n",
            e.key.category, e.key.instance, e.provenance_seed, e.shard, e.offset, e.count
        ));
    }
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

fn write_record(buf: &mut Vec<u8>, obs: &GraspObservation) {
    buf.extend_from_slice(&obs.object_key.category.to_le_bytes());
    buf.extend_from_slice(&obs.object_key.instance.to_le_bytes());
    buf.extend_from_slice(&obs.grasp.position.0.to_le_bytes());
    buf.extend_from_slice(&obs.grasp.position.1.to_le_bytes());
    buf.extend_from_slice(&obs.grasp.angle.to_le_bytes());
    buf.extend_from_slice(&obs.grasp.jaw_opening.to_le_bytes());
    buf.extend_from_slice(&obs.grasp.z.to_le_bytes());
    buf.push(obs.label);
    buf.extend_from_slice(&obs.patch.grasp_z.to_le_bytes());
    for &px in &obs.patch.pixels {
        buf.extend_from_slice(&(px as f32).to_le_bytes());
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CoreError::Format("empty manifest".into()))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some(MANIFEST_MAGIC) {
        return Err(CoreError::Format("not a manifest (bad magic)".into()));
    }
    let version: u32 = tok
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| CoreError::Format("bad manifest version".into()))?;
    if version != MANIFEST_VERSION {
        return Err(CoreError::Format(format!(
            "unsupported manifest version {version}"
        )));
    }

    let mut config_hash = None;
    let mut patch_size = None;
    let mut shards: Vec<(usize, String)> = Vec::new();
    let mut objects = Vec::new();
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("config") => {
                config_hash = Some(unhex(
                    tok.next().ok_or_else(|| CoreError::Format("missing hash".into()))?,
                )?);
            }
            Some("patch_size") => {
                patch_size = Some(
                    tok.next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| CoreError::Format("bad patch_size".into()))?,
                );
            }
            Some("shard") => {
                let idx: usize = tok
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| CoreError::Format("bad shard index".into()))?;
                let name = tok
                    .next()
                    .ok_or_else(|| CoreError::Format("missing shard name".into()))?;
                shards.push((idx, name.to_string()));
            }
            Some("object") => {
                let vals: Vec<&str> = tok.collect();
                if vals.len() != 6 {
                    return Err(CoreError::Format("object line wants 6 fields".into()));
                }
                let parse_u64 = |s: &str| -> Result<u64> {
                    s.parse()
                        .map_err(|_| CoreError::Format(format!("bad number {s:?}")))
                };
                objects.push(ManifestEntry {
                    key: ObjectKey {
                        category: vals[0]
                            .parse()
                            .map_err(|_| CoreError::Format("bad category".into()))?,
                        instance: parse_u64(vals[1])?,
                    },
                    provenance_seed: parse_u64(vals[2])?,
                    shard: parse_u64(vals[3])? as usize,
                    offset: parse_u64(vals[4])?,
                    count: parse_u64(vals[5])?,
                });
            }
            Some(other) => {
                return Err(CoreError::Format(format!(
                    "unknown manifest directive {other:?}"
                )));
            }
        }
    }

    shards.sort();
    if shards.iter().enumerate().any(|(i, (idx, _))| i != *idx) {
        return Err(CoreError::Format("shard indices not dense".into()));
    }
    Ok(Manifest {
        config_hash: config_hash.ok_or_else(|| CoreError::Format("manifest missing config".into()))?,
        patch_size: patch_size.ok_or_else(|| CoreError::Format("manifest missing patch_size".into()))?,
        shards: shards.into_iter().map(|(_, n)| n).collect(),
        objects,
    })
}

fn read_header(file: &mut fs::File) -> Result<ShardHeader> {
    let mut head = [0_u8; HEADER_LEN as usize];
    file.read_exact(&mut head)?;
    if &head[..8] != SHARD_MAGIC {
        return Err(CoreError::Format("not a shard file (bad magic)".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != SHARD_VERSION {
        return Err(CoreError::Format(format!("unsupported shard version {version}")));
    }
    let patch_size = u32_at(12);
    let record_count = u64::from_le_bytes(head[16..24].try_into().unwrap());
    let mut config_hash = [0_u8; 32];
    config_hash.copy_from_slice(&head[24..56]);
    Ok(ShardHeader {
        version,
        patch_size,
        record_count,
        config_hash,
    })
}

/// Load one object's records back as observations. Patches come back at f32
/// precision (that is what shards store).
pub fn load_object_observations(
    dir: &Path,
    manifest: &Manifest,
    entry: &ManifestEntry,
) -> Result<ObjectObservations> {
    let name = manifest
        .shards
        .get(entry.shard)
        .ok_or_else(|| CoreError::Format(format!("manifest lacks shard {}", entry.shard)))?;
    let mut file = fs::File::open(dir.join(name))?;
    let header = read_header(&mut file)?;
    if header.patch_size as usize != manifest.patch_size {
        return Err(CoreError::Format("shard/manifest patch size mismatch".into()));
    }
    if header.config_hash != manifest.config_hash {
        return Err(CoreError::Format("shard/manifest config hash mismatch".into()));
    }
    if entry.offset + entry.count > header.record_count {
        return Err(CoreError::Format(format!(
            "object range {}+{} exceeds shard records {}",
            entry.offset, entry.count, header.record_count
        )));
    }
    let ps = manifest.patch_size;
    let rlen = record_len(ps);
    file.seek(SeekFrom::Start(HEADER_LEN + entry.offset * rlen))?;
    let mut raw = vec![0_u8; (entry.count * rlen) as usize];
    file.read_exact(&mut raw)?;

    let mut observations = Vec::with_capacity(entry.count as usize);
    for rec in raw.chunks_exact(rlen as usize) {
        let f64_at = |i: usize| f64::from_le_bytes(rec[i..i + 8].try_into().unwrap());
        let key = ObjectKey {
            category: u32::from_le_bytes(rec[0..4].try_into().unwrap()),
            instance: u64::from_le_bytes(rec[4..12].try_into().unwrap()),
        };
        if key != entry.key {
            return Err(CoreError::Format(format!(
                "record for {key} found in range mapped to {}",
                entry.key
            )));
        }
        let grasp = GraspCandidate {
            position: (f64_at(12), f64_at(20)),
            angle: f64_at(28),
            jaw_opening: f64_at(36),
            z: f64_at(44),
        };
        let label = rec[52];
        if label > 1 {
            return Err(CoreError::Format(format!("label byte {label} not 0/1")));
        }
        let grasp_z = f64_at(53);
        let mut pixels = Vec::with_capacity(ps * ps);
        for px in rec[61..].chunks_exact(4) {
            pixels.push(f64::from(f32::from_le_bytes(px.try_into().unwrap())));
        }
        observations.push(GraspObservation {
            object_key: key,
            patch: GraspPatch {
                size: ps,
                pixels,
                grasp_z,
            },
            grasp,
            label,
        });
    }
    Ok(ObjectObservations {
        key: entry.key,
        provenance_seed: entry.provenance_seed,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collect::{collect_dataset, CollectParams};
    use crate::objgen::{flip_object, generate_letter_object};
    use crate::physics::{grasp_outcome, PhysicsParams};
    use crate::render::RenderConfig;

    fn sample_pools() -> Vec<ObjectObservations> {
        let objects: Vec<_> = (0..5)
            .map(|i| {
                let mut o = generate_letter_object(i % 10, 300 + i as u64).unwrap();
                o.instance_id = i as u64;
                o
            })
            .collect();
        let cp = CollectParams {
            grasps_per_object: 8,
            patch_size: 32,
            ..CollectParams::default()
        };
        collect_dataset(&objects, &cp, &PhysicsParams::default(), &RenderConfig::default(), 1)
            .unwrap()
    }

    #[test]
    fn shards_round_trip_at_f32_patch_precision() {
        let dir = tempfile::tempdir().unwrap();
        let pools = sample_pools();
        let manifest = write_shards(dir.path(), &pools, 32, [7_u8; 32], 2).unwrap();
        assert_eq!(manifest.shards.len(), 3);
        assert_eq!(manifest.total_observations(), 40);

        let reread = read_manifest(dir.path()).unwrap();
        assert_eq!(reread, manifest);

        for (entry, pool) in manifest.objects.iter().zip(&pools) {
            let loaded = load_object_observations(dir.path(), &manifest, entry).unwrap();
            assert_eq!(loaded.key, pool.key);
            assert_eq!(loaded.provenance_seed, pool.provenance_seed);
            assert_eq!(loaded.observations.len(), pool.observations.len());
            for (a, b) in loaded.observations.iter().zip(&pool.observations) {
                assert_eq!(a.grasp, b.grasp);
                assert_eq!(a.label, b.label);
                assert_eq!(a.patch.grasp_z, b.patch.grasp_z);
                for (pa, pb) in a.patch.pixels.iter().zip(&b.patch.pixels) {
                    assert_eq!(*pa, f64::from(*pb as f32));
                }
            }
        }
    }

    #[test]
    fn rewriting_produces_byte_identical_files() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let pools = sample_pools();
        write_shards(d1.path(), &pools, 32, [0_u8; 32], 3).unwrap();
        write_shards(d2.path(), &pools, 32, [0_u8; 32], 3).unwrap();
        for name in ["manifest.txt", "shard_0000.bin", "shard_0001.bin"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn labels_rederive_from_manifest_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let pools = sample_pools();
        let manifest = write_shards(dir.path(), &pools, 32, [1_u8; 32], 100).unwrap();
        let pp = PhysicsParams::default();
        for entry in &manifest.objects {
            let mut obj =
                generate_letter_object(entry.key.category, entry.provenance_seed).unwrap();
            if entry.key.instance & crate::objgen::FLIP_BIT != 0 {
                obj = flip_object(&obj);
            }
            obj.instance_id = entry.key.instance;
            let loaded = load_object_observations(dir.path(), &manifest, entry).unwrap();
            for obs in &loaded.observations {
                let relabel = u8::from(grasp_outcome(&obj, &obs.grasp, &pp).unwrap());
                assert_eq!(relabel, obs.label, "label drifted for {}", entry.key);
            }
        }
    }

    #[test]
    fn corrupt_and_mismatched_inputs_error() {
        let dir = tempfile::tempdir().unwrap();
        let pools = sample_pools();
        let manifest = write_shards(dir.path(), &pools, 32, [2_u8; 32], 2).unwrap();

        // Wrong patch size is rejected at write time.
        assert!(write_shards(dir.path(), &pools, 64, [2_u8; 32], 2).is_err());

        // Tampered hash in the manifest is caught on load.
        let mut bad = manifest.clone();
        bad.config_hash = [9_u8; 32];
        assert!(load_object_observations(dir.path(), &bad, &bad.objects[0]).is_err());

        // Out-of-range record window.
        let mut oob = manifest.objects[0];
        oob.count = 10_000;
        assert!(load_object_observations(dir.path(), &manifest, &oob).is_err());

        // Truncated manifest text.
        std::fs::write(dir.path().join(MANIFEST_FILE), "condex-manifest 1\n").unwrap();
        assert!(read_manifest(dir.path()).is_err());
    }
}
