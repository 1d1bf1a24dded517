pub mod audio;
pub mod wsep;

pub use audio::{read_audio, read_f32x2, read_wav, write_f32x2, write_wav};
pub use wsep::{read_wsep, write_wsep};
