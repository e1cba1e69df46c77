//! Reading and writing the on-disk formats, with diagnostics that name the file.

use std::fmt;
use std::fs;
use std::path::Path;

use mapcd_core::ccl::{instances_from_json, instances_to_json};
use mapcd_core::{ChangeMap, Error, Instance, LabelRaster, Legend, MaskSet, PromptedResults};

/// Why a command failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Classifies a library error that is not tied to a file.
pub fn core_failure(e: Error) -> Failure {
    match e {
        Error::InvalidParam(_) => Failure::Usage(e.to_string()),
        _ => Failure::Data(e.to_string()),
    }
}

fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn load_raster(path: &Path) -> CliResult<LabelRaster> {
    LabelRaster::from_pgm(&read_bytes(path)?).map_err(in_file(path))
}

pub fn load_change_map(path: &Path) -> CliResult<ChangeMap> {
    ChangeMap::from_pgm(&read_bytes(path)?).map_err(in_file(path))
}

pub fn load_legend(path: &Path) -> CliResult<Legend> {
    Legend::parse(&read_text(path)?).map_err(in_file(path))
}

pub fn load_masks(path: &Path) -> CliResult<MaskSet> {
    MaskSet::from_json(&read_text(path)?).map_err(in_file(path))
}

pub fn load_prompted(path: &Path) -> CliResult<PromptedResults> {
    PromptedResults::from_json(&read_text(path)?).map_err(in_file(path))
}

pub struct InstanceDump {
    pub width: u32,
    pub height: u32,
    pub instances: Vec<Instance>,
}

pub fn load_instances(path: &Path) -> CliResult<InstanceDump> {
    let (width, height, instances) =
        instances_from_json(&read_text(path)?).map_err(in_file(path))?;
    Ok(InstanceDump {
        width,
        height,
        instances,
    })
}

pub fn save_instances(
    path: &Path,
    width: u32,
    height: u32,
    instances: &[Instance],
) -> CliResult<()> {
    write_file(path, instances_to_json(width, height, instances))
}

/// Fails unless two inputs share dimensions, naming both files.
pub fn same_dims(a: &Path, a_dims: (u32, u32), b: &Path, b_dims: (u32, u32)) -> CliResult<()> {
    if a_dims == b_dims {
        return Ok(());
    }
    Err(Failure::Data(format!(
        "dimension mismatch: {} is {}x{} but {} is {}x{}",
        a.display(),
        a_dims.0,
        a_dims.1,
        b.display(),
        b_dims.0,
        b_dims.1
    )))
}
