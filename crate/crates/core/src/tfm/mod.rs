pub mod distributions;
pub mod duration;
pub mod evidence;
pub mod params;
pub mod score;
pub mod train;
