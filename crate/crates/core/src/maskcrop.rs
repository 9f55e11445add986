//! Largest axis-aligned rectangle inside a binary mask, and cropping to it.

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Ordering key: larger area first, then top-most, left-most, widest.
    fn preference(&self) -> (std::cmp::Reverse<usize>, usize, usize, std::cmp::Reverse<usize>) {
        use std::cmp::Reverse;
        (Reverse(self.area()), self.y, self.x, Reverse(self.w))
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Largest rectangle covering only set mask bits.
///
/// Runs the histogram-of-heights sweep: each row is the base of a histogram of
/// consecutive set bits above it, and a monotonic stack yields the widest span
/// for every bar. Every maximum-area rectangle shows up as a candidate for its
/// shortest column, so ties can be resolved over the candidates alone.
pub fn largest_inscribed_rectangle(mask: &Mask) -> Result<Rect> {
    let (width, height) = (mask.width(), mask.height());
    let mut heights = vec![0usize; width];
    let mut stack: Vec<usize> = Vec::with_capacity(width + 1);
    let mut best: Option<Rect> = None;

    for row in 0..height {
        for (x, h) in heights.iter_mut().enumerate() {
            *h = if mask.get(x, row) { *h + 1 } else { 0 };
        }
        stack.clear();
        for i in 0..=width {
            let cur = if i < width { heights[i] } else { 0 };
            while let Some(&top) = stack.last() {
                if heights[top] < cur {
                    break;
                }
                stack.pop();
                let h = heights[top];
                if h == 0 {
                    continue;
                }
                let left = stack.last().map_or(0, |&s| s + 1);
                let cand = Rect {
                    x: left,
                    y: row + 1 - h,
                    w: i - left,
                    h,
                };
                if best.is_none_or(|b| cand.preference() < b.preference()) {
                    best = Some(cand);
                }
            }
            stack.push(i);
        }
    }
    best.ok_or(Error::EmptyMask)
}

pub fn crop(image: &Image, rect: Rect) -> Result<Image> {
    if !rect.fits(image.width(), image.height()) {
        return Err(Error::OutOfBounds {
            x: rect.x,
            y: rect.y,
            w: rect.w,
            h: rect.h,
            width: image.width(),
            height: image.height(),
        });
    }
    let mut pixels = Vec::with_capacity(rect.area());
    for y in rect.y..rect.y + rect.h {
        let start = y * image.width() + rect.x;
        pixels.extend_from_slice(&image.pixels()[start..start + rect.w]);
    }
    Image::new(rect.w, rect.h, pixels)
}
