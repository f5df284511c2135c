//! Event and geometry primitives: event records, time windowing, bounding
//! boxes and target-centered region selection.

use crate::error::{Error, Result};

/// Sign of the intensity change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(s: i8) -> Result<Self> {
        match s {
            1 => Ok(Polarity::Positive),
            -1 => Ok(Polarity::Negative),
            other => Err(Error::InvalidArgument(format!(
                "polarity must be +1 or -1, got {other}"
            ))),
        }
    }

    /// Channel-group index used by the embeddings: positive first.
    pub fn group(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }
}

/// A single sensor event: microsecond timestamp, pixel location, polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }
}

/// Pixel dimensions of the grid an event stream lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorGeometry {
    width: usize,
    height: usize,
}

impl SensorGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "sensor geometry must be positive, got {width}x{height}"
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        (x as usize) < self.width && (y as usize) < self.height
    }
}

/// A time-bounded, time-sorted batch of events on a known grid. Events
/// satisfy `t_start <= t < t_end` and in-bounds coordinates by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventWindow {
    events: Vec<Event>,
    t_start: u64,
    t_end: u64,
    geometry: SensorGeometry,
}

impl EventWindow {
    pub fn new(
        events: Vec<Event>,
        t_start: u64,
        t_end: u64,
        geometry: SensorGeometry,
    ) -> Result<Self> {
        if t_end < t_start {
            return Err(Error::InvalidInterval { t_start, t_end });
        }
        check_sorted(&events)?;
        for e in &events {
            if e.t < t_start || e.t >= t_end {
                return Err(Error::InvalidArgument(format!(
                    "event at t={} outside window [{t_start}, {t_end})",
                    e.t
                )));
            }
            if !geometry.contains(e.x, e.y) {
                return Err(Error::InvalidArgument(format!(
                    "event at ({}, {}) outside {}x{} grid",
                    e.x,
                    e.y,
                    geometry.width(),
                    geometry.height()
                )));
            }
        }
        Ok(EventWindow {
            events,
            t_start,
            t_end,
            geometry,
        })
    }

    pub fn empty(t_start: u64, t_end: u64, geometry: SensorGeometry) -> Result<Self> {
        EventWindow::new(Vec::new(), t_start, t_end, geometry)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t_start(&self) -> u64 {
        self.t_start
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    pub fn duration_us(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }
}

fn check_sorted(events: &[Event]) -> Result<()> {
    for i in 1..events.len() {
        if events[i].t < events[i - 1].t {
            return Err(Error::UnsortedEvents {
                index: i,
                prev: events[i - 1].t,
                next: events[i].t,
            });
        }
    }
    Ok(())
}

/// Axis-aligned target box: real-valued center and positive extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidArgument(
                "bounding box fields must be finite".into(),
            ));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "bounding box extent must be positive, got {w}x{h}"
            )));
        }
        Ok(BoundingBox { cx, cy, w, h })
    }

    pub fn scaled(&self, s: f64) -> BoundingBox {
        BoundingBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w * s,
            h: self.h * s,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn x_max(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn y_min(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn y_max(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        (self.w * self.w + self.h * self.h).sqrt()
    }
}

/// The target-centered crop rectangle, in sensor coordinates. It may extend
/// beyond the sensor; the out-of-sensor area simply contains no events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionGeometry {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl RegionGeometry {
    /// Integer origin of the pixel grid covering the region.
    pub fn grid_origin(&self) -> (i64, i64) {
        (self.x0.floor() as i64, self.y0.floor() as i64)
    }

    /// Pixel grid large enough to hold every integer pixel intersecting the
    /// region rectangle.
    pub fn grid_size(&self) -> (usize, usize) {
        let w = ((self.x0 + self.width).ceil() as i64 - self.x0.floor() as i64).max(1) as usize;
        let h = ((self.y0 + self.height).ceil() as i64 - self.y0.floor() as i64).max(1) as usize;
        (w, h)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }
}

/// Extract the events of `[t_start, t_end)` from a time-sorted stream.
pub fn slice_window(
    stream: &[Event],
    t_start: u64,
    t_end: u64,
    geometry: SensorGeometry,
) -> Result<EventWindow> {
    if t_start >= t_end {
        return Err(Error::InvalidInterval { t_start, t_end });
    }
    check_sorted(stream)?;
    let lo = stream.partition_point(|e| e.t < t_start);
    let hi = stream.partition_point(|e| e.t < t_end);
    EventWindow::new(stream[lo..hi].to_vec(), t_start, t_end, geometry)
}

/// Width and height of the target-centered region for a box: the target
/// extended by half the opposite side on each axis.
pub fn region_size(b: &BoundingBox) -> (f64, f64) {
    (0.5 * b.h + 1.5 * b.w, 0.5 * b.w + 1.5 * b.h)
}

/// The target-centered region rectangle for a box.
pub fn target_region(b: &BoundingBox) -> RegionGeometry {
    let (w, h) = region_size(b);
    RegionGeometry {
        x0: b.cx - w / 2.0,
        y0: b.cy - h / 2.0,
        width: w,
        height: h,
    }
}

/// Select the events inside the target-centered region of `b`, shifted to
/// region-local integer coordinates.
pub fn select_target_region(
    window: &EventWindow,
    b: &BoundingBox,
) -> Result<(EventWindow, RegionGeometry)> {
    let region = target_region(b);
    let (ox, oy) = region.grid_origin();
    let (gw, gh) = region.grid_size();
    if gw > u16::MAX as usize || gh > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "region grid {gw}x{gh} exceeds the addressable pixel range"
        )));
    }
    let mut selected = Vec::new();
    for e in window.events() {
        if region.contains(e.x as f64, e.y as f64) {
            let lx = e.x as i64 - ox;
            let ly = e.y as i64 - oy;
            debug_assert!(lx >= 0 && ly >= 0);
            selected.push(Event::new(e.t, lx as u16, ly as u16, e.polarity));
        }
    }
    let local = EventWindow::new(
        selected,
        window.t_start(),
        window.t_end(),
        SensorGeometry::new(gw, gh)?,
    )?;
    Ok((local, region))
}
