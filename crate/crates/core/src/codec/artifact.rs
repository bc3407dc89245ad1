use thiserror::Error;

use crate::channel::{GroupGains, RepetitionPlan};

use super::{CodecConfig, DecoderParams, PyramidSymbols, KERNEL_SIZE};

pub const ARTIFACT_MAGIC: [u8; 4] = *b"IJSC";
pub const ARTIFACT_VERSION: u16 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArtifactError {
    #[error("not a codec artifact (bad magic)")]
    BadMagic,
    #[error("unsupported artifact version {0}")]
    UnsupportedVersion(u16),
    #[error("artifact truncated")]
    Truncated,
    #[error("{0} trailing bytes after artifact")]
    TrailingBytes(usize),
    #[error("invalid artifact: {0}")]
    Invalid(String),
}

/// Original and padded source geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub padded_height: usize,
    pub padded_width: usize,
}

impl SourceDims {
    pub fn new(config: &CodecConfig, height: usize, width: usize) -> Self {
        let (padded_height, padded_width) = config.padded_dims(height, width);
        Self { height, width, channels: config.source_channels, padded_height, padded_width }
    }

    pub fn padded_pixels(&self) -> usize {
        self.padded_height * self.padded_width
    }
}

/// Everything the transmitter emits for one source: the channel input
/// before noise and the decoder parameters before repetition, plus the side
/// information the receiver needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionArtifact {
    pub config: CodecConfig,
    pub source: SourceDims,
    pub snr_db: f64,
    pub gains: GroupGains,
    pub common_seed: u64,
    pub symbols: PyramidSymbols,
    pub params: DecoderParams,
}

impl TransmissionArtifact {
    pub fn repetition_plan(&self) -> Result<RepetitionPlan, crate::channel::ChannelError> {
        let layout = self.params.layout();
        RepetitionPlan::new(
            self.config.kappa_redu,
            self.config.kappa_lsm,
            layout.redu_len(),
            layout.lsm_len(),
            self.gains,
        )
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("artifact field exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ArtifactError> {
        if self.0.len() < N {
            return Err(ArtifactError::Truncated);
        }
        let (head, tail) = self.0.split_at(N);
        self.0 = tail;
        Ok(head.try_into().expect("split at N"))
    }
    fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<usize, ArtifactError> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }
    fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, ArtifactError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, ArtifactError> {
        let n = self.u64()?;
        if n > (self.0.len() / 8) as u64 {
            return Err(ArtifactError::Truncated);
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Little-endian binary layout:
///
/// ```text
/// "IJSC" u16:version
/// u32:levels u32:L_k* u32:d u32:C u32:kernel u32:kappa_lsm u32:kappa_redu
/// u32:height u32:width u32:channels u32:padded_height u32:padded_width
/// f64:snr_db u64:common_seed f64:gain_redu f64:gain_lsm
/// u64:n f64*n (symbols)  u64:m f64*m (parameters)
/// ```
pub fn serialize_artifact(a: &TransmissionArtifact) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&ARTIFACT_MAGIC);
    w.u16(ARTIFACT_VERSION);
    let c = &a.config;
    w.u32(c.levels());
    c.level_channels.iter().for_each(|&l| w.u32(l));
    w.u32(c.hidden_dim);
    w.u32(c.source_channels);
    w.u32(KERNEL_SIZE);
    w.u32(c.kappa_lsm);
    w.u32(c.kappa_redu);
    let s = &a.source;
    for v in [s.height, s.width, s.channels, s.padded_height, s.padded_width] {
        w.u32(v);
    }
    w.f64(a.snr_db);
    w.u64(a.common_seed);
    w.f64(a.gains.redu);
    w.f64(a.gains.lsm);
    w.f64s(&a.symbols.flatten());
    w.f64s(a.params.as_slice());
    w.0
}

pub fn deserialize_artifact(bytes: &[u8]) -> Result<TransmissionArtifact, ArtifactError> {
    let invalid = |msg: String| ArtifactError::Invalid(msg);
    let mut r = Reader(bytes);
    if r.take::<4>()? != ARTIFACT_MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    let version = r.u16()?;
    if version != ARTIFACT_VERSION {
        return Err(ArtifactError::UnsupportedVersion(version));
    }
    let levels = r.u32()?;
    if levels > 32 {
        return Err(invalid(format!("{levels} pyramid levels")));
    }
    let level_channels = (0..levels).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let hidden_dim = r.u32()?;
    let source_channels = r.u32()?;
    let kernel = r.u32()?;
    if kernel != KERNEL_SIZE {
        return Err(invalid(format!("kernel size {kernel}, expected {KERNEL_SIZE}")));
    }
    let kappa_lsm = r.u32()?;
    let kappa_redu = r.u32()?;
    let config = CodecConfig::new(level_channels, hidden_dim, source_channels, kappa_lsm, kappa_redu)
        .map_err(|e| invalid(e.to_string()))?;

    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()?;
    }
    let [height, width, channels, padded_height, padded_width] = dims;
    let source = SourceDims { height, width, channels, padded_height, padded_width };
    if source != SourceDims::new(&config, height, width) {
        return Err(invalid(format!("inconsistent source geometry {source:?}")));
    }

    let snr_db = r.f64()?;
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(invalid(format!("snr {snr_db}")));
    }
    let common_seed = r.u64()?;
    let gains = GroupGains { redu: r.f64()?, lsm: r.f64()? };
    let symbols = r.f64s()?;
    let params = r.f64s()?;
    if !r.0.is_empty() {
        return Err(ArtifactError::TrailingBytes(r.0.len()));
    }
    let symbols = PyramidSymbols::from_flat(&config, padded_height, padded_width, &symbols)
        .map_err(|e| invalid(e.to_string()))?;
    let params = DecoderParams::from_flat(&config, params).map_err(|e| invalid(e.to_string()))?;
    let artifact =
        TransmissionArtifact { config, source, snr_db, gains, common_seed, symbols, params };
    artifact.repetition_plan().map_err(|e| invalid(e.to_string()))?;
    Ok(artifact)
}
